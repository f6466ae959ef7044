#include "spidl/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace spidl {

CellMask full_mask(Eigen::Index nx, Eigen::Index nt) { return CellMask::Constant(nx, nt, true); }

CellMask evaluation_mask(const TrafficGrid& truth, std::span<const int> detector_rows, MaskMode mode) {
  return mode == MaskMode::FullGrid ? full_mask(truth.nx(), truth.nt()) : unobserved_mask(truth, detector_rows);
}

namespace {

void check_shapes(const MatrixXd& est, const MatrixXd& truth, const CellMask& mask) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw ShapeError("estimate and truth differ in shape");
  if (mask.rows() != truth.rows() || mask.cols() != truth.cols()) throw ShapeError("mask and truth differ in shape");
  if (!mask.any()) throw DataError("evaluation mask selects no cells");
}

}  // namespace

StateMetrics state_metrics(const MatrixXd& est, const MatrixXd& truth, const CellMask& mask) {
  check_shapes(est, truth, mask);
  double abs_sum = 0.0, sq_sum = 0.0, true_sq = 0.0;
  const auto n = static_cast<double>(mask.count());
  for (Eigen::Index k = 0; k < truth.cols(); ++k) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      if (!mask(i, k)) continue;
      const double e = est(i, k) - truth(i, k);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      true_sq += truth(i, k) * truth(i, k);
    }
  }
  StateMetrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.l2 = true_sq > 0.0 ? std::sqrt(sq_sum / true_sq) : (sq_sum > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return m;
}

MetricReport compute_metrics(const EstimateField& est, const TrafficGrid& truth, const CellMask& mask) {
  MetricReport r;
  r.density = state_metrics(est.rho_mean, truth.densities, mask);
  r.speed = state_metrics(est.v_mean, truth.speeds, mask);
  r.cells = mask.count();
  r.mask = mask.all() ? MaskMode::FullGrid : MaskMode::Unobserved;
  return r;
}

CoverageReport ci_coverage(const EstimateField& est, const TrafficGrid& truth, const CellMask& mask) {
  if (!est.has_bounds()) throw DataError("estimate field has no confidence bounds");
  check_shapes(est.rho_lo, truth.densities, mask);
  check_shapes(est.v_lo, truth.speeds, mask);
  Eigen::Index in_rho = 0, in_v = 0;
  for (Eigen::Index k = 0; k < truth.nt(); ++k) {
    for (Eigen::Index i = 0; i < truth.nx(); ++i) {
      if (!mask(i, k)) continue;
      const double r = truth.densities(i, k), v = truth.speeds(i, k);
      in_rho += r >= est.rho_lo(i, k) && r <= est.rho_hi(i, k);
      in_v += v >= est.v_lo(i, k) && v <= est.v_hi(i, k);
    }
  }
  CoverageReport c;
  c.level = est.ci_level;
  c.cells = mask.count();
  c.density = static_cast<double>(in_rho) / static_cast<double>(c.cells);
  c.speed = static_cast<double>(in_v) / static_cast<double>(c.cells);
  c.density_interval = (est.rho_hi - est.rho_lo).cwiseAbs().maxCoeff() > 0.0;
  return c;
}

FdBand reconstruct_fd_scatter(const EstimateField& est, int n_draws, std::uint64_t seed, const FdBandOptions& opts) {
  if (n_draws < 1) throw ConfigError("draw count must be positive");
  if (opts.bins < 3) throw ConfigError("band needs at least 3 density bins");
  if (est.rho_mean.size() == 0) throw DataError("empty estimate field");
  const Eigen::Index nx = est.nx(), nt = est.nt();
  const auto layers = static_cast<std::ptrdiff_t>(est.v_layers.size());
  const bool rho_layers = !est.rho_layers.empty() && static_cast<std::ptrdiff_t>(est.rho_layers.size()) == layers;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick_i(0, nx - 1), pick_k(0, nt - 1);
  std::uniform_int_distribution<std::ptrdiff_t> pick_l(0, std::max<std::ptrdiff_t>(layers - 1, 0));
  std::normal_distribution<double> z(0.0, 1.0);

  FdBand b;
  b.scatter_rho.resize(n_draws);
  b.scatter_v.resize(n_draws);
  for (int d = 0; d < n_draws; ++d) {
    const Eigen::Index i = pick_i(rng), k = pick_k(rng);
    if (layers > 0) {
      const auto l = static_cast<std::size_t>(pick_l(rng));
      b.scatter_rho(d) = rho_layers ? est.rho_layers[l](i, k) : est.rho_mean(i, k);
      b.scatter_v(d) = est.v_layers[l](i, k);
    } else {
      const double sr = est.rho_std.size() ? est.rho_std(i, k) : 0.0;
      const double sv = est.v_std.size() ? est.v_std(i, k) : 0.0;
      b.scatter_rho(d) = est.rho_mean(i, k) + sr * z(rng);
      b.scatter_v(d) = est.v_mean(i, k) + sv * z(rng);
    }
  }

  const double top = std::max(b.scatter_rho.maxCoeff(), 1e-9);
  const double lo_edge = std::min(b.scatter_rho.minCoeff(), 0.0);
  const ArrayXd edges = ArrayXd::LinSpaced(opts.bins + 1, lo_edge, top);
  std::vector<std::vector<double>> per_bin(static_cast<std::size_t>(opts.bins));
  const double width = (top - lo_edge) / opts.bins;
  for (int d = 0; d < n_draws; ++d) {
    auto j = static_cast<int>((b.scatter_rho(d) - lo_edge) / width);
    j = std::clamp(j, 0, opts.bins - 1);
    per_bin[static_cast<std::size_t>(j)].push_back(b.scatter_v(d));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  b.centers.resize(opts.bins);
  b.lo.setConstant(opts.bins, nan);
  b.mid.setConstant(opts.bins, nan);
  b.hi.setConstant(opts.bins, nan);
  b.counts.resize(opts.bins);
  IntervalStats stats;
  stats.edges = edges;
  stats.counts.resize(opts.bins);
  stats.means.setZero(opts.bins);
  stats.variances.setZero(opts.bins);
  stats.usable.setConstant(opts.bins, false);
  for (int j = 0; j < opts.bins; ++j) {
    auto& v = per_bin[static_cast<std::size_t>(j)];
    b.centers(j) = 0.5 * (edges(j) + edges(j + 1));
    b.counts(j) = static_cast<double>(v.size());
    stats.counts(j) = b.counts(j);
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    b.lo(j) = sorted_quantile(v, opts.lower);
    b.mid(j) = sorted_quantile(v, 0.5);
    b.hi(j) = sorted_quantile(v, opts.upper);
    stats.means(j) = b.mid(j);
    // The S3 curve is defined for non-negative density only.
    stats.usable(j) = static_cast<int>(v.size()) >= opts.min_count && b.centers(j) > 0.0;
  }
  try {
    b.fit = fit_s3(stats);
    b.fitted = true;
  } catch (const InsufficientDataError&) {
    b.fitted = false;
  }
  return b;
}

namespace {

// Speeds at one cell: every layer value, or the mean when there are no layers.
void append_cell_speeds(const EstimateField& est, Eigen::Index i, Eigen::Index k, std::vector<double>& out) {
  if (est.v_layers.empty()) {
    out.push_back(est.v_mean(i, k));
    return;
  }
  for (const auto& layer : est.v_layers) out.push_back(layer(i, k));
}

}  // namespace

std::vector<SpeedHistogram> speed_histograms(const EstimateField& est, const std::vector<double>& densities,
                                             int bin_count, double window, double v_max) {
  if (bin_count < 1) throw ConfigError("histogram needs at least one bin");
  if (!(window > 0.0)) throw ConfigError("density window must be positive");
  if (v_max <= 0.0) {
    v_max = est.v_mean.maxCoeff();
    for (const auto& layer : est.v_layers) v_max = std::max(v_max, layer.maxCoeff());
  }
  if (!(v_max > 0.0)) throw DataError("estimated speeds are all non-positive");

  std::vector<SpeedHistogram> out;
  for (double target : densities) {
    SpeedHistogram h;
    h.target = target;
    h.edges = ArrayXd::LinSpaced(bin_count + 1, 0.0, v_max);
    h.probabilities.setZero(bin_count);
    std::vector<double> speeds;
    for (Eigen::Index k = 0; k < est.nt(); ++k) {
      for (Eigen::Index i = 0; i < est.nx(); ++i) {
        if (std::abs(est.rho_mean(i, k) - target) <= window) append_cell_speeds(est, i, k, speeds);
      }
    }
    h.samples = static_cast<Eigen::Index>(speeds.size());
    h.empty = speeds.empty();
    if (!h.empty) {
      for (double v : speeds) {
        const auto j = std::clamp(static_cast<int>(v / v_max * bin_count), 0, bin_count - 1);
        h.probabilities(j) += 1.0;
      }
      h.probabilities /= static_cast<double>(speeds.size());
      std::sort(speeds.begin(), speeds.end());
      h.q25 = sorted_quantile(speeds, 0.25);
      h.median = sorted_quantile(speeds, 0.5);
      h.q75 = sorted_quantile(speeds, 0.75);
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<std::vector<double>> speeds_by_density_decile(const EstimateField& est) {
  const Eigen::Index n = est.rho_mean.size();
  if (n < 10) throw InsufficientDataError("decile split needs at least 10 cells");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return est.rho_mean(a) < est.rho_mean(b); });
  std::vector<std::vector<double>> out(10);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto decile = static_cast<std::size_t>(std::min<Eigen::Index>(r * 10 / n, 9));
    const Eigen::Index cell = order[static_cast<std::size_t>(r)];
    append_cell_speeds(est, cell % est.nx(), cell / est.nx(), out[decile]);
  }
  return out;
}

namespace {

const char* mask_name(MaskMode m) { return m == MaskMode::FullGrid ? "full-grid" : "unobserved"; }

nlohmann::json metrics_node(const StateMetrics& s) { return {{"mae", s.mae}, {"rmse", s.rmse}, {"l2", s.l2}}; }

nlohmann::json report_node(const MetricReport& m, const CoverageReport* c) {
  nlohmann::json j = {{"mask", mask_name(m.mask)},
                      {"cells", m.cells},
                      {"detectors", m.detectors},
                      {"variant", m.variant},
                      {"seed", m.seed},
                      {"density", metrics_node(m.density)},
                      {"speed", metrics_node(m.speed)}};
  if (c) {
    j["coverage"] = {{"level", c->level},
                     {"density", c->density_interval ? nlohmann::json(c->density) : nlohmann::json(nullptr)},
                     {"speed", c->speed},
                     {"cells", c->cells}};
  }
  return j;
}

}  // namespace

std::string to_json(const MetricReport& m, const CoverageReport* coverage) {
  return report_node(m, coverage).dump(2);
}

void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& metrics,
                  const std::vector<CoverageReport>& coverage, const std::string& lineage_json) {
  if (!coverage.empty() && coverage.size() != metrics.size()) throw ShapeError("one coverage report per metric report");
  nlohmann::json j;
  j["lineage"] = lineage_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(lineage_json);
  j["reports"] = nlohmann::json::array();
  for (std::size_t r = 0; r < metrics.size(); ++r) {
    j["reports"].push_back(report_node(metrics[r], coverage.empty() ? nullptr : &coverage[r]));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void export_fd_band(const FdBand& band, const std::filesystem::path& scatter_csv, const std::filesystem::path& band_csv) {
  std::ofstream s(scatter_csv);
  if (!s) throw DataError("cannot write " + scatter_csv.string());
  s << "rho,v\n" << std::setprecision(10);
  for (Eigen::Index d = 0; d < band.scatter_rho.size(); ++d) s << band.scatter_rho(d) << ',' << band.scatter_v(d) << '\n';
  std::ofstream b(band_csv);
  if (!b) throw DataError("cannot write " + band_csv.string());
  b << "rho,count,v_lo,v_mid,v_hi,v_s3\n" << std::setprecision(10);
  for (Eigen::Index j = 0; j < band.centers.size(); ++j) {
    b << band.centers(j) << ',' << band.counts(j) << ',' << band.lo(j) << ',' << band.mid(j) << ',' << band.hi(j) << ',';
    if (band.fitted && band.centers(j) >= 0.0) b << s3_speed(band.fit, band.centers(j));
    b << '\n';
  }
}

void export_histograms(const std::vector<SpeedHistogram>& hs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "target_rho,bin_lo,bin_hi,probability,samples,empty\n" << std::setprecision(10);
  for (const auto& h : hs) {
    for (Eigen::Index j = 0; j < h.probabilities.size(); ++j) {
      out << h.target << ',' << h.edges(j) << ',' << h.edges(j + 1) << ',' << h.probabilities(j) << ',' << h.samples
          << ',' << (h.empty ? 1 : 0) << '\n';
    }
  }
}

}  // namespace spidl
