#include "pipeline.hpp"

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>

using namespace spidl;
using namespace spidl::cli;

int main(int argc, char** argv) {
  CLI::App app{"Stochastic physics-informed traffic state estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "Run configuration (JSON)")->envname("SPIDL_CONFIG");
  app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--jobs", jobs, "Worker threads for member-parallel stages")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Override the output directory");

  const std::map<std::string, std::pair<std::string, std::function<void(const RunConfig&)>>> commands{
      {"ingest", {"Validate and copy a grid file into the run directory", cmd_ingest}},
      {"generate", {"Simulate a synthetic Godunov-LWR ground truth", cmd_generate}},
      {"calibrate", {"Calibrate the percentile fundamental-diagram family", cmd_calibrate}},
      {"fit-fd", {"Fit the Beta stochastic fundamental diagram", cmd_fit_fd}},
      {"train", {"Train the configured estimator and export its field", cmd_train}},
      {"evaluate", {"Score the estimate against the ground truth", cmd_evaluate}},
      {"plot", {"Render SVG figures from the evaluation tables", cmd_plot}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (config_path.empty()) throw ConfigError("no configuration given; pass --config or set SPIDL_CONFIG");
    RunConfig c = load_run_config(config_path);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    if (out) c.output_dir = *out;
    const std::string name = app.get_subcommands().front()->get_name();
    commands.at(name).second(c);
    return 0;
  } catch (const Error& e) {
    std::cerr << "spidl: error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "spidl: error: malformed JSON artifact: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "spidl: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "spidl: error: " << e.what() << '\n';
    return 4;
  }
}
