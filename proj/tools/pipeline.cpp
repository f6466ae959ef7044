#include "pipeline.hpp"

#include "svg.hpp"

#include "spidl/alpha_spidl.hpp"
#include "spidl/checkpoint.hpp"
#include "spidl/evaluation.hpp"
#include "spidl/synthetic.hpp"
#include "spidl/vae.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef SPIDL_VERSION
#define SPIDL_VERSION "0.0.0"
#endif

namespace spidl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kGrid = "grid.csv";
constexpr const char* kScenario = "scenario.ini";
constexpr const char* kFamily = "family.csv";
constexpr const char* kProcess = "process.ini";
constexpr const char* kSpectrum = "spectrum.csv";
constexpr const char* kCheckpoint = "train/checkpoint.txt";
constexpr const char* kTrace = "train/trace.csv";
constexpr const char* kSamples = "train/speed_samples.csv";
constexpr const char* kReport = "evaluate/report.json";
constexpr const char* kSummary = "evaluate/summary.json";
constexpr const char* kFdScatter = "evaluate/fd_scatter.csv";
constexpr const char* kFdBand = "evaluate/fd_band.csv";
constexpr const char* kHistograms = "evaluate/histograms.csv";
constexpr const char* kDeciles = "evaluate/deciles.csv";
constexpr const char* kProfiles = "evaluate/profiles.csv";
const std::vector<std::string> kFieldFiles{"train/field/density.csv", "train/field/speed.csv",
                                           "train/field/layers.csv", "train/field/metadata.json"};

json versions() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"spidl", SPIDL_VERSION}, {"eigen", eigen.str()}, {"compiler", __VERSION__}};
}

std::string hash(const RunConfig& c, Stage s) { return stage_hash(c, s); }

void progress(const std::string& msg) { std::cerr << "spidl: " << msg << '\n'; }

TrafficGrid load_source(const RunConfig& c, const Manifest& m) {
  return ingest_grid(m.require(kGrid, "source", hash(c, Stage::Source), "generate` or `spidl ingest"));
}

ObservationSet observe(const RunConfig& c, const TrafficGrid& grid) {
  const auto rows = detector_rows(c, static_cast<int>(grid.nx()));
  return sample_detectors(grid, static_cast<int>(rows.size()), DetectorStrategy::ExplicitRows, rows);
}

SampleWeights calibration_weights(const RunConfig& c, const ObservationSet& obs) {
  return c.density_balanced ? SampleWeights::density_balanced(obs.rho) : SampleWeights::uniform(obs.size());
}

std::vector<std::string> with_field(std::vector<std::string> v) {
  v.insert(v.end(), kFieldFiles.begin(), kFieldFiles.end());
  return v;
}

json norm_json(const NormalizationSpec& n) {
  return {{"x_origin", n.x_origin}, {"t_origin", n.t_origin}, {"x_scale", n.x_scale},
          {"t_scale", n.t_scale},   {"rho_scale", n.rho_scale}, {"v_scale", n.v_scale}};
}

void write_trace(const fs::path& path, const std::vector<std::vector<TraceEntry>>& traces) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "member,epoch,data,physics,total,best\n" << std::setprecision(10);
  for (std::size_t m = 0; m < traces.size(); ++m)
    for (std::size_t e = 0; e < traces[m].size(); ++e) {
      const auto& t = traces[m][e];
      out << m << ',' << e << ',' << t.data << ',' << t.physics << ',' << t.total << ',' << t.best << '\n';
    }
}

// Minimal reader for the CSV tables this tool writes itself.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("table has no column '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
  ArrayXd col(const std::string& name) const {
    const int j = column(name);
    ArrayXd a(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) a(static_cast<Eigen::Index>(r)) = rows[r][static_cast<std::size_t>(j)];
    return a;
  }
};

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw DataError("empty table " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(cell.empty() ? std::nan("") : std::stod(cell));
    row.resize(t.header.size(), std::nan(""));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<int> profile_rows(const RunConfig& c, const TrafficGrid& grid, const std::vector<int>& detectors) {
  if (!c.profile_rows.empty()) {
    for (int r : c.profile_rows)
      if (r < 0 || r >= grid.nx()) throw ConfigError("evaluate.profile_rows entry " + std::to_string(r) + " is off the grid");
    return c.profile_rows;
  }
  // Unobserved row closest to the middle of the section.
  const int mid = static_cast<int>(grid.nx() / 2);
  int best = -1;
  for (int r = 0; r < grid.nx(); ++r) {
    if (std::find(detectors.begin(), detectors.end(), r) != detectors.end()) continue;
    if (best < 0 || std::abs(r - mid) < std::abs(best - mid)) best = r;
  }
  return best < 0 ? std::vector<int>{mid} : std::vector<int>{best};
}

}  // namespace

std::vector<int> detector_rows(const RunConfig& c, int nx) {
  if (c.detector_rows.empty()) return equispaced_rows(nx, c.detector_count);
  for (int r : c.detector_rows)
    if (r < 0 || r >= nx) throw ConfigError("detectors.rows entry " + std::to_string(r) + " is off the grid");
  return c.detector_rows;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
  }
  return 4;
}

// -- manifest ---------------------------------------------------------------

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) {
  const fs::path p = dir_ / "manifest.json";
  if (fs::exists(p)) {
    std::ifstream in(p);
    try {
      j_ = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("corrupt manifest " + p.string() + ": " + e.what());
    }
  } else {
    j_ = {{"stages", json::object()}};
  }
}

fs::path Manifest::require(const std::string& artifact, const std::string& stage_key, const std::string& expected_hash,
                           const std::string& producer) const {
  const fs::path p = path(artifact);
  const std::string fix = "; run `spidl " + producer + "` first";
  if (!fs::exists(p)) throw DataError("missing " + p.string() + fix);
  const auto& stages = j_.at("stages");
  if (!stages.contains(stage_key)) throw DataError(p.string() + " is not recorded in the manifest" + fix);
  const auto& entry = stages.at(stage_key);
  if (entry.at("config_hash").get<std::string>() != expected_hash)
    throw DataError(p.string() + " was produced under a different configuration" + fix);
  const auto& outputs = entry.at("artifacts");
  if (!outputs.contains(artifact) || outputs.at(artifact).get<std::string>() != sha256_file(p))
    throw DataError(p.string() + " changed after it was produced" + fix);
  return p;
}

void Manifest::record(const std::string& stage_key, const std::string& command, const std::string& config_hash,
                      std::uint64_t seed, const RunConfig& config, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) {
  json entry;
  entry["command"] = command;
  entry["config_hash"] = config_hash;
  entry["seed"] = seed;
  entry["config"] = json::parse(to_json(config));
  entry["versions"] = versions();
  entry["inputs"] = json::object();
  for (const auto& a : inputs) entry["inputs"][a] = sha256_file(path(a));
  entry["artifacts"] = json::object();
  for (const auto& a : outputs) entry["artifacts"][a] = sha256_file(path(a));
  j_["stages"][stage_key] = std::move(entry);
  std::ofstream out(dir_ / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir_.string());
  out << j_.dump(2) << '\n';
}

// -- subcommands ------------------------------------------------------------

void cmd_ingest(const RunConfig& c) {
  if (c.grid_path.empty()) throw ConfigError("data.grid must name the grid file to ingest");
  TrafficGrid grid = ingest_grid(c.grid_path, c.dx, c.dt);
  fs::create_directories(c.output_dir);
  Manifest m(c.output_dir);
  export_grid(grid, m.path(kGrid));
  m.record("source", "ingest", hash(c, Stage::Source), c.seed, c, {}, {kGrid});
  progress("ingested " + std::to_string(grid.nx()) + "x" + std::to_string(grid.nt()) + " grid");
}

void cmd_generate(const RunConfig& c) {
  Scenario s = c.scenario_path.empty() ? c.scenario : load_scenario(c.scenario_path);
  s.speed_cv = c.noise_cv.value_or(s.speed_cv);
  TrafficGrid grid = generate_synthetic_lwr(s, s.fd, s.speed_cv, s.seed);
  fs::create_directories(c.output_dir);
  Manifest m(c.output_dir);
  export_grid(grid, m.path(kGrid));
  save_scenario(s, m.path(kScenario));
  m.record("source", "generate", hash(c, Stage::Source), s.seed, c, {}, {kGrid, kScenario});
  progress("generated " + std::to_string(grid.nx()) + "x" + std::to_string(grid.nt()) + " grid");
}

void cmd_calibrate(const RunConfig& c) {
  Manifest m(c.output_dir);
  const TrafficGrid grid = load_source(c, m);
  const ObservationSet obs = observe(c, grid);
  const auto family = calibrate_family(obs, calibration_weights(c, obs), c.alphas, c.calibration, c.jobs);
  export_family(family, m.path(kFamily));
  m.record("calibrate", "calibrate", hash(c, Stage::Calibrate), c.seed, c, {kGrid}, {kFamily});
  progress("calibrated " + std::to_string(family.size()) + " percentile curves");
}

void cmd_fit_fd(const RunConfig& c) {
  Manifest m(c.output_dir);
  const TrafficGrid grid = load_source(c, m);
  const ObservationSet obs = observe(c, grid);
  const BetaProcess process = fit_beta_process(obs, c.process);
  save_process(process, m.path(kProcess));
  export_spectrum(process, 100, m.path(kSpectrum));
  m.record("fit-fd", "fit-fd", hash(c, Stage::FitFd), c.seed, c, {kGrid}, {kProcess, kSpectrum});
  progress("fitted Beta process, v_max " + std::to_string(process.v_max) + " m/s");
}

void cmd_train(const RunConfig& c) {
  Manifest m(c.output_dir);
  const TrafficGrid grid = load_source(c, m);
  const ObservationSet obs = observe(c, grid);
  const NormalizationSpec norm = make_normalizer(grid, obs);
  const Eigen::Index n_c = c.collocation_count > 0 ? c.collocation_count : 10 * obs.size();
  const CollocationSet colloc = sample_collocation(grid, n_c, c.seed, c.collocation_scheme);
  fs::create_directories(m.path("train"));

  json meta{{"variant", variant_name(c.variant)},
            {"config_hash", hash(c, Stage::Train)},
            {"seed", c.seed},
            {"normalization", norm_json(norm)},
            {"detector_rows", obs.detector_rows}};
  std::vector<std::string> inputs{kGrid};
  std::vector<std::string> outputs{kCheckpoint, kTrace};
  EstimateField field;

  if (c.variant == Variant::Beta) {
    const BetaProcess process = load_process(m.require(kProcess, "fit-fd", hash(c, Stage::FitFd), "fit-fd"));
    inputs.push_back(kProcess);
    progress("training B-SPIDL on " + std::to_string(obs.size()) + " observations");
    BetaResult r = train_beta_spidl(obs, colloc, process, c.kappa, c.beta, c.seed, norm, grid.geometry());
    save_checkpoint(r.model.bundle(), m.path(kCheckpoint));
    write_trace(m.path(kTrace), {r.trace});
    meta["b_low_rho"] = r.model.density.b_low;
    meta["b_low_v"] = r.model.speed.b_low;
    meta["initial_loss"] = r.initial_loss;
    meta["final_loss"] = r.final_loss;

    // Sample dump at (up to) the first 500 collocation points.
    const Eigen::Index n = std::min<Eigen::Index>(500, colloc.size());
    const ArrayXd xs = colloc.x.head(n), ts = colloc.t.head(n);
    const MatrixXd X = normalized_inputs(xs, ts, norm);
    const ArrayXd rho = estimate_density(r.model, X);
    const SpeedSampleSet samples = estimate_speed_samples(r.model, X, c.beta.samples, c.seed);
    export_speed_samples(m.path(kSamples), xs, ts, rho, samples);
    outputs.push_back(kSamples);
    field = std::move(r.field);
  } else {
    const PercentileFDFamily family =
        import_family(m.require(kFamily, "calibrate", hash(c, Stage::Calibrate), "calibrate"));
    inputs.push_back(kFamily);
    const PhysicsModel physics = c.variant == Variant::AlphaArz ? PhysicsModel::Arz : PhysicsModel::Lwr;
    progress("training " + std::to_string(family.size()) + " " + variant_name(c.variant) + " members on " +
             std::to_string(obs.size()) + " observations");
    FamilyResult r = train_family(obs, colloc, family, physics, c.loss, c.alpha, c.seed, norm, grid.geometry(), c.jobs);
    NetworkBundle bundle;
    std::vector<std::vector<TraceEntry>> traces;
    json members = json::array();
    for (std::size_t k = 0; k < r.members.size(); ++k) {
      const auto& mem = r.members[k];
      bundle.merge(mem.model.bundle("member" + std::to_string(k) + "."));
      traces.push_back(mem.trace);
      members.push_back({{"alpha", mem.alpha},
                         {"rho_cr", mem.fd.rho_cr},
                         {"v_f", mem.fd.v_f},
                         {"initial_loss", mem.initial_loss},
                         {"final_loss", mem.final_loss}});
    }
    save_checkpoint(bundle, m.path(kCheckpoint));
    write_trace(m.path(kTrace), traces);
    meta["members"] = std::move(members);
    field = std::move(r.field);
  }

  export_field(field, m.path("train/field"), meta.dump());
  m.record("train", "train", hash(c, Stage::Train), c.seed, c, inputs, with_field(outputs));
  progress("wrote estimate field " + std::to_string(field.nx()) + "x" + std::to_string(field.nt()));
}

void cmd_evaluate(const RunConfig& c) {
  Manifest m(c.output_dir);
  const TrafficGrid truth = load_source(c, m);
  const std::string train_hash = hash(c, Stage::Train);
  for (const auto& f : kFieldFiles) m.require(f, "train", train_hash, "train");
  const EstimateField field = import_field(m.path("train/field"));
  if (field.nx() != truth.nx() || field.nt() != truth.nt())
    throw ShapeError("estimate field and ground truth grids differ in shape");
  const auto rows = detector_rows(c, static_cast<int>(truth.nx()));
  fs::create_directories(m.path("evaluate"));

  std::vector<MetricReport> metrics;
  std::vector<CoverageReport> coverage;
  auto add = [&](MaskMode mode) {
    const CellMask mask = evaluation_mask(truth, rows, mode);
    MetricReport r = compute_metrics(field, truth, mask);
    r.detectors = static_cast<int>(rows.size());
    r.variant = variant_name(c.variant);
    r.seed = c.seed;
    metrics.push_back(r);
    if (field.has_bounds()) coverage.push_back(ci_coverage(field, truth, mask));
  };
  if (c.report_full_grid) add(MaskMode::FullGrid);
  if (c.report_unobserved) add(MaskMode::Unobserved);

  json lineage{{"config_hash", hash(c, Stage::Evaluate)},
               {"train_config_hash", train_hash},
               {"grid_sha256", sha256_file(m.path(kGrid))},
               {"field_sha256", sha256_file(m.path("train/field/layers.csv"))}};
  write_report(m.path(kReport), metrics, coverage, lineage.dump());

  const FdBand band = reconstruct_fd_scatter(field, c.fd_draws, c.seed);
  export_fd_band(band, m.path(kFdScatter), m.path(kFdBand));

  const auto hists = speed_histograms(field, c.histogram_densities, c.histogram_bins, c.histogram_window);
  export_histograms(hists, m.path(kHistograms));

  json summary;
  summary["fd_fit"] = band.fitted ? json{{"v_f", band.fit.v_f}, {"rho_cr", band.fit.rho_cr}, {"m", band.fit.m_shape}}
                                  : json(nullptr);
  summary["histograms"] = json::array();
  for (const auto& h : hists)
    summary["histograms"].push_back({{"density", h.target},
                                     {"samples", h.samples},
                                     {"empty", h.empty},
                                     {"median", h.median},
                                     {"iqr", h.iqr()}});
  {
    std::ofstream out(m.path(kDeciles));
    out << "decile,count,q25,median,q75,iqr\n" << std::setprecision(10);
    summary["deciles"] = json::array();
    const auto deciles = speeds_by_density_decile(field);
    for (std::size_t d = 0; d < deciles.size(); ++d) {
      std::vector<double> v = deciles[d];
      std::sort(v.begin(), v.end());
      if (v.empty()) {
        out << d << ",0,,,,\n";
        continue;
      }
      const double q25 = sorted_quantile(v, 0.25), q50 = sorted_quantile(v, 0.5), q75 = sorted_quantile(v, 0.75);
      out << d << ',' << v.size() << ',' << q25 << ',' << q50 << ',' << q75 << ',' << q75 - q25 << '\n';
      summary["deciles"].push_back({{"decile", d}, {"count", v.size()}, {"median", q50}, {"iqr", q75 - q25}});
    }
  }
  std::ofstream(m.path(kSummary)) << summary.dump(2) << '\n';

  {
    std::ofstream out(m.path(kProfiles));
    out << "row,t,rho_true,v_true,rho_mean,rho_lo,rho_hi,v_mean,v_lo,v_hi\n" << std::setprecision(10);
    const bool b = field.has_bounds();
    for (int r : profile_rows(c, truth, rows))
      for (Eigen::Index k = 0; k < truth.nt(); ++k) {
        out << r << ',' << truth.t_at(k) << ',' << truth.densities(r, k) << ',' << truth.speeds(r, k) << ','
            << field.rho_mean(r, k) << ',' << (b ? field.rho_lo(r, k) : field.rho_mean(r, k)) << ','
            << (b ? field.rho_hi(r, k) : field.rho_mean(r, k)) << ',' << field.v_mean(r, k) << ','
            << (b ? field.v_lo(r, k) : field.v_mean(r, k)) << ',' << (b ? field.v_hi(r, k) : field.v_mean(r, k))
            << '\n';
      }
  }

  m.record("evaluate", "evaluate", hash(c, Stage::Evaluate), c.seed, c, with_field({kGrid}),
           {kReport, kSummary, kFdScatter, kFdBand, kHistograms, kDeciles, kProfiles});
  for (const auto& r : metrics)
    progress(std::string(r.mask == MaskMode::FullGrid ? "full grid" : "unobserved") +
             ": density L2 " + std::to_string(r.density.l2) + ", speed L2 " + std::to_string(r.speed.l2));
}

void cmd_plot(const RunConfig& c) {
  Manifest m(c.output_dir);
  const std::string eval_hash = hash(c, Stage::Evaluate);
  for (const char* a : {kFdScatter, kFdBand, kHistograms, kProfiles}) m.require(a, "evaluate", eval_hash, "evaluate");
  const TrafficGrid truth = load_source(c, m);
  for (const auto& f : kFieldFiles) m.require(f, "train", hash(c, Stage::Train), "train");
  const EstimateField field = import_field(m.path("train/field"));
  fs::create_directories(m.path("plots"));

  const double rho_top = std::max(truth.densities.maxCoeff(), field.rho_mean.maxCoeff());
  const double v_top = std::max(truth.speeds.maxCoeff(), field.v_mean.maxCoeff());
  const double t_end = truth.t_at(truth.nt() - 1), x_end = truth.x_at(truth.nx() - 1);
  auto heat = [&](const MatrixXd& z, const std::string& title, double top, const std::string& name) {
    svg::heatmap(z, {truth.t0, t_end}, {truth.x0, x_end}, {0.0, top}, title, "time (s)", "position (m)",
                 m.path("plots/" + name));
  };
  heat(truth.densities, "True density (veh/m)", rho_top, "density_true.svg");
  heat(field.rho_mean, "Estimated density (veh/m)", rho_top, "density_estimate.svg");
  heat(truth.speeds, "True speed (m/s)", v_top, "speed_true.svg");
  heat(field.v_mean, "Estimated speed (m/s)", v_top, "speed_estimate.svg");
  if (field.has_bounds()) {
    const MatrixXd width = field.v_hi - field.v_lo;
    heat(width, "Speed CI width (m/s)", std::max(width.maxCoeff(), 1e-9), "speed_ci_width.svg");
  }

  const Table scatter = read_table(m.path(kFdScatter)), band = read_table(m.path(kFdBand));
  svg::fd_band(scatter.col("rho"), scatter.col("v"), band.col("rho"), band.col("v_lo"), band.col("v_mid"),
               band.col("v_hi"), band.col("v_s3"), m.path("plots/fd_band.svg"));

  const Table hist = read_table(m.path(kHistograms));
  svg::histograms(hist.col("target_rho"), hist.col("bin_lo"), hist.col("bin_hi"), hist.col("probability"),
                  m.path("plots/speed_histograms.svg"));

  const Table prof = read_table(m.path(kProfiles));
  svg::profiles(prof.col("row"), prof.col("t"), prof.col("v_true"), prof.col("v_mean"), prof.col("v_lo"),
                prof.col("v_hi"), m.path("plots/speed_profiles.svg"));

  std::vector<std::string> outs;
  for (const auto& e : fs::directory_iterator(m.path("plots"))) outs.push_back("plots/" + e.path().filename().string());
  std::sort(outs.begin(), outs.end());
  m.record("plot", "plot", eval_hash, c.seed, c, {kFdScatter, kFdBand, kHistograms, kProfiles}, outs);
  progress("wrote " + std::to_string(outs.size()) + " plots");
}

}  // namespace spidl::cli
