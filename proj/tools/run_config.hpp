#pragma once

#include "spidl/alpha_spidl.hpp"
#include "spidl/evaluation.hpp"
#include "spidl/percentile_fd.hpp"
#include "spidl/stochastic_fd.hpp"
#include "spidl/synthetic.hpp"
#include "spidl/vae.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spidl::cli {

enum class Variant { AlphaLwr, AlphaArz, Beta };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

/// Everything one run needs. Loaded from JSON; unknown keys are rejected.
struct RunConfig {
  // data
  std::filesystem::path grid_path;  // ingest source
  std::optional<double> dx, dt;     // expected spacing, checked against the file

  // generate
  std::filesystem::path scenario_path;  // optional INI scenario, overrides the inline one
  Scenario scenario;
  std::optional<double> noise_cv;  // overrides the scenario's speed_cv

  // detectors
  int detector_count = 4;
  std::vector<int> detector_rows;  // explicit rows override the count

  // collocation
  Eigen::Index collocation_count = 0;  // 0 = ten per observation
  CollocationScheme collocation_scheme = CollocationScheme::UniformRandom;

  Variant variant = Variant::Beta;

  // percentile family
  std::vector<double> alphas = default_alphas();
  bool density_balanced = true;
  CalibrationOptions calibration;

  // stochastic process
  ProcessOptions process;

  // alpha-SPIDL
  TrainConfig alpha;
  LossWeights loss;

  // B-SPIDL
  BetaTrainConfig beta;
  BetaLossWeights kappa;

  // evaluate
  bool report_full_grid = true;
  bool report_unobserved = true;
  std::vector<double> histogram_densities{0.1, 0.2, 0.3, 0.4};
  int histogram_bins = 20;
  double histogram_window = 0.01;
  int fd_draws = 20000;
  std::vector<int> profile_rows;  // empty = first unobserved row

  std::uint64_t seed = 1;
  int jobs = 1;
  std::filesystem::path output_dir = "run";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON of every field, defaults included.
std::string to_json(const RunConfig& c);

enum class Stage { Source, Calibrate, FitFd, Train, Evaluate };
/// SHA-256 over the config sections a stage and its upstream depend on.
std::string stage_hash(const RunConfig& c, Stage s);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace spidl::cli
