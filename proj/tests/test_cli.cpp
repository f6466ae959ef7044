#include "pipeline.hpp"
#include "run_config.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace spidl;
using namespace spidl::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string err;
};

// Runs the CLI binary and captures its exit code and stderr.
CliResult spidl_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(SPIDL_BIN) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

nlohmann::json tiny_config(const fs::path& out) {
  auto j = nlohmann::json::parse(R"({
    "generate": {"noise_cv": 0.05,
      "scenario": {"domain": {"nx": 9, "nt": 60, "substeps": 2},
                   "initial": {"type": "riemann+pulse", "left_density": 0.1, "right_density": 0.4,
                               "interface_x": 120, "pulse_center": 60, "pulse_amplitude": 0.06}}},
    "detectors": {"count": 5},
    "model": {"variant": "beta"},
    "percentile": {"alphas": [0.1, 0.5, 0.9]},
    "process": {"intervals": 6, "n_min": 3},
    "alpha": {"hidden": [8, 8], "epochs": 20},
    "beta": {"shape": {"latent": 3, "encoder_layers": 2, "encoder_width": 8,
                       "decoder_layers": 2, "decoder_width": 8},
             "epochs": 20, "samples": 8},
    "evaluate": {"fd_draws": 500}
  })");
  j["output_dir"] = out.string();
  return j;
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("spidl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = tiny_config(dir_ / "run");
    write();
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write() { std::ofstream(dir_ / "cfg.json") << config_.dump(2); }
  CliResult run(const std::string& sub) { return spidl_cli(sub + " --config " + (dir_ / "cfg.json").string(), dir_); }

  fs::path dir_;
  nlohmann::json config_;
};

}  // namespace

TEST(RunConfig, DefaultsRoundTrip) {
  const std::string once = to_json(parse_run_config("{}"));
  EXPECT_EQ(to_json(parse_run_config(once)), once);
}

TEST(RunConfig, ReadsNestedValues) {
  const RunConfig c = parse_run_config(R"({"model": {"variant": "alpha-arz"},
      "alpha": {"hidden": [4, 5], "weights": {"tau": 7.5}, "ci_method": "empirical"},
      "generate": {"scenario": {"initial": {"type": "pulse"}, "boundary": {"type": "periodic"}}},
      "collocation": {"scheme": "grid", "count": 100}, "seed": 9})");
  EXPECT_EQ(c.variant, Variant::AlphaArz);
  EXPECT_EQ(c.alpha.hidden, (std::vector<int>{4, 5}));
  EXPECT_DOUBLE_EQ(c.loss.tau, 7.5);
  EXPECT_EQ(c.alpha.ci_method, CiMethod::Empirical);
  EXPECT_EQ(c.scenario.initial, InitialProfile::Pulse);
  EXPECT_EQ(c.scenario.boundary, BoundaryKind::Periodic);
  EXPECT_EQ(c.collocation_scheme, CollocationScheme::Grid);
  EXPECT_EQ(c.collocation_count, 100);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(c.noise_cv.has_value());
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
  for (const char* text : {R"({"sed": 1})", R"({"alpha": {"epoch": 3}})", R"({"alpha": {"weights": {"gamma3": 1}}})",
                           R"({"generate": {"scenario": {"domain": {"ny": 3}}}})", R"({"beta": {"kappa": {"k4": 1}}})"}) {
    try {
      parse_run_config(text);
      ADD_FAILURE() << "accepted " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("unknown config key"), std::string::npos) << e.what();
    }
  }
}

TEST(RunConfig, UnknownKeyMessageNamesThePath) {
  try {
    parse_run_config(R"({"alpha": {"weights": {"gamma3": 1}}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha.weights.gamma3"), std::string::npos);
  }
}

TEST(RunConfig, RejectsWrongTypesAndValues) {
  EXPECT_THROW(parse_run_config(R"({"alpha": {"epochs": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"alpha": {"twin": 1}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"variant": "gamma"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"percentile": {"alphas": [0.5, 1.2]}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"jobs": 0})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"detectors": []})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}

TEST(RunConfig, StageHashesTrackTheirSections) {
  RunConfig a = parse_run_config("{}");
  RunConfig b = a;
  b.jobs = 7;
  b.output_dir = "elsewhere";
  for (Stage s : {Stage::Source, Stage::Calibrate, Stage::FitFd, Stage::Train, Stage::Evaluate})
    EXPECT_EQ(stage_hash(a, s), stage_hash(b, s));

  b = a;
  b.beta.epochs += 1;  // default variant is beta
  EXPECT_EQ(stage_hash(a, Stage::FitFd), stage_hash(b, Stage::FitFd));
  EXPECT_EQ(stage_hash(a, Stage::Calibrate), stage_hash(b, Stage::Calibrate));
  EXPECT_NE(stage_hash(a, Stage::Train), stage_hash(b, Stage::Train));
  EXPECT_NE(stage_hash(a, Stage::Evaluate), stage_hash(b, Stage::Evaluate));

  b = a;
  b.scenario.nx += 2;
  EXPECT_NE(stage_hash(a, Stage::Source), stage_hash(b, Stage::Source));

  b = a;
  b.histogram_bins += 1;
  EXPECT_EQ(stage_hash(a, Stage::Train), stage_hash(b, Stage::Train));
  EXPECT_NE(stage_hash(a, Stage::Evaluate), stage_hash(b, Stage::Evaluate));
}

TEST(RunConfig, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(exit_code(ErrorKind::Config), 2);
  EXPECT_EQ(exit_code(ErrorKind::Data), 3);
  EXPECT_EQ(exit_code(ErrorKind::Numerical), 4);
}

TEST(Pipeline, DetectorRowsFromCountOrList) {
  RunConfig c = parse_run_config(R"({"detectors": {"count": 3}})");
  EXPECT_EQ(detector_rows(c, 9), (std::vector<int>{0, 4, 8}));
  c.detector_rows = {1, 2};
  EXPECT_EQ(detector_rows(c, 9), (std::vector<int>{1, 2}));
  c.detector_rows = {9};
  EXPECT_THROW(detector_rows(c, 9), ConfigError);
}

TEST_F(CliRun, FullPipelineCompletes) {
  for (const char* sub : {"generate", "calibrate", "fit-fd", "train", "evaluate", "plot"}) {
    const CliResult r = run(sub);
    ASSERT_EQ(r.code, 0) << sub << ": " << r.err;
  }
  const fs::path out = dir_ / "run";
  for (const char* f : {"grid.csv", "family.csv", "process.ini", "spectrum.csv", "train/checkpoint.txt",
                        "train/field/speed.csv", "train/speed_samples.csv", "evaluate/report.json",
                        "evaluate/fd_band.csv", "evaluate/histograms.csv", "plots/fd_band.svg",
                        "plots/density_estimate.svg", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  for (const char* stage : {"source", "calibrate", "fit-fd", "train", "evaluate", "plot"}) {
    ASSERT_TRUE(manifest["stages"].contains(stage)) << stage;
    EXPECT_EQ(manifest["stages"][stage]["config_hash"].get<std::string>().size(), 64u);
    EXPECT_TRUE(manifest["stages"][stage].contains("versions"));
  }
  const auto report = nlohmann::json::parse(slurp(out / "evaluate/report.json"));
  ASSERT_EQ(report["reports"].size(), 2u);
  EXPECT_EQ(report["reports"][0]["mask"], "full-grid");
  EXPECT_EQ(report["reports"][1]["mask"], "unobserved");
  EXPECT_TRUE(report["reports"][1]["coverage"]["density"].is_null());  // B-SPIDL density is a point estimate
  EXPECT_GE(report["reports"][1]["speed"]["rmse"].get<double>(), report["reports"][1]["speed"]["mae"].get<double>());
}

TEST_F(CliRun, EvaluateIsByteIdenticalOnRerun) {
  for (const char* sub : {"generate", "fit-fd", "train", "evaluate"}) ASSERT_EQ(run(sub).code, 0) << sub;
  const fs::path out = dir_ / "run/evaluate";
  const std::string report = slurp(out / "report.json"), band = slurp(out / "fd_band.csv"),
                    hist = slurp(out / "histograms.csv");
  ASSERT_EQ(run("evaluate").code, 0);
  EXPECT_EQ(slurp(out / "report.json"), report);
  EXPECT_EQ(slurp(out / "fd_band.csv"), band);
  EXPECT_EQ(slurp(out / "histograms.csv"), hist);
}

TEST_F(CliRun, TrainIsDeterministic) {
  for (const char* sub : {"generate", "fit-fd", "train"}) ASSERT_EQ(run(sub).code, 0) << sub;
  const std::string first = slurp(dir_ / "run/train/field/speed.csv");
  ASSERT_EQ(run("train").code, 0);
  EXPECT_EQ(slurp(dir_ / "run/train/field/speed.csv"), first);
}

TEST_F(CliRun, AlphaArzWithoutFamilyPointsAtCalibrate) {
  config_["model"]["variant"] = "alpha-arz";
  write();
  ASSERT_EQ(run("generate").code, 0);
  const CliResult r = run("train");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("spidl calibrate"), std::string::npos) << r.err;
}

TEST_F(CliRun, AlphaLwrRunsAfterCalibrate) {
  config_["model"]["variant"] = "alpha-lwr";
  write();
  for (const char* sub : {"generate", "calibrate", "train", "evaluate"}) {
    const CliResult r = run(sub);
    ASSERT_EQ(r.code, 0) << sub << ": " << r.err;
  }
  const auto report = nlohmann::json::parse(slurp(dir_ / "run/evaluate/report.json"));
  EXPECT_TRUE(report["reports"][0]["coverage"]["density"].is_number());
}

TEST_F(CliRun, EvaluateRefusesMismatchedLineage) {
  for (const char* sub : {"generate", "fit-fd", "train"}) ASSERT_EQ(run(sub).code, 0) << sub;
  config_["beta"]["epochs"] = 21;
  write();
  const CliResult r = run("evaluate");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("spidl train"), std::string::npos) << r.err;
}

TEST_F(CliRun, TamperedGridIsDetected) {
  ASSERT_EQ(run("generate").code, 0);
  std::ofstream(dir_ / "run/grid.csv", std::ios::app) << "\n";
  const CliResult r = run("fit-fd");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("changed after it was produced"), std::string::npos) << r.err;
}

TEST_F(CliRun, MissingUpstreamNamesProducer) {
  const CliResult r = run("fit-fd");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("spidl generate"), std::string::npos) << r.err;
}

TEST_F(CliRun, ConfigErrorsExitTwo) {
  config_["alpha"]["learning_rat"] = 1e-3;
  write();
  const CliResult r = run("generate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("alpha.learning_rat"), std::string::npos) << r.err;
  EXPECT_EQ(spidl_cli("generate", dir_).code, 2);               // no config at all
  EXPECT_EQ(spidl_cli("bogus --config x.json", dir_).code, 2);  // unknown subcommand
}

TEST_F(CliRun, OverrideFlagsApply) {
  const fs::path other = dir_ / "other";
  const CliResult r = spidl_cli("generate --config " + (dir_ / "cfg.json").string() + " --out " + other.string() +
                              " --seed 5 --jobs 2",
                          dir_);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = nlohmann::json::parse(slurp(other / "manifest.json"));
  EXPECT_EQ(manifest["stages"]["source"]["config"]["seed"], 5);
  EXPECT_EQ(manifest["stages"]["source"]["config"]["jobs"], 2);
}

TEST_F(CliRun, ConfigFromEnvironment) {
  ::setenv("SPIDL_CONFIG", (dir_ / "cfg.json").c_str(), 1);
  const CliResult r = spidl_cli("generate", dir_);
  ::unsetenv("SPIDL_CONFIG");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run/grid.csv"));
}
