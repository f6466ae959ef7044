#pragma once

#include "run_config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace spidl::cli {

/// Run-directory bookkeeping: one entry per stage with the config hash it ran
/// under, its seed and the SHA-256 of every artifact it wrote or read.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path(const std::string& artifact) const { return dir_ / artifact; }

  /// Resolves an input artifact and checks it against the manifest: the file
  /// must exist, be recorded by `stage_key` under `expected_hash`, and still
  /// have the recorded digest. Failures name `producer`, the subcommand to re-run.
  std::filesystem::path require(const std::string& artifact, const std::string& stage_key,
                                const std::string& expected_hash, const std::string& producer) const;

  /// Records a finished stage and writes manifest.json.
  void record(const std::string& stage_key, const std::string& command, const std::string& config_hash,
              std::uint64_t seed, const RunConfig& config, const std::vector<std::string>& inputs,
              const std::vector<std::string>& outputs);

  const nlohmann::json& data() const { return j_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json j_;
};

void cmd_ingest(const RunConfig& c);
void cmd_generate(const RunConfig& c);
void cmd_calibrate(const RunConfig& c);
void cmd_fit_fd(const RunConfig& c);
void cmd_train(const RunConfig& c);
void cmd_evaluate(const RunConfig& c);
void cmd_plot(const RunConfig& c);

/// Detector rows the config selects on a grid with `nx` rows.
std::vector<int> detector_rows(const RunConfig& c, int nx);

/// Exit code for an error category: 2 config, 3 data, 4 numerical.
int exit_code(ErrorKind kind);

}  // namespace spidl::cli
