#include "spidl/percentile_fd.hpp"

#include "spidl/nelder_mead.hpp"
#include "spidl/parallel.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace spidl {

void PercentileFDFamily::validate() const {
  if (members.empty()) throw ConfigError("empty percentile family");
  for (std::size_t j = 1; j < members.size(); ++j) {
    if (!(members[j].alpha > members[j - 1].alpha)) throw ConfigError("family alphas must be strictly increasing");
  }
}

SampleWeights SampleWeights::density_balanced(const ArrayXd& rho, int bins) {
  if (bins < 1) throw ConfigError("weight bins must be positive");
  const Eigen::Index n = rho.size();
  if (n == 0) return {ArrayXd()};
  const double lo = rho.minCoeff();
  const double hi = rho.maxCoeff();
  const double width = (hi - lo) / bins;
  std::vector<Eigen::Index> bin_of(static_cast<std::size_t>(n));
  std::vector<double> freq(static_cast<std::size_t>(bins), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int b = width > 0.0 ? static_cast<int>((rho(i) - lo) / width) : 0;
    b = std::clamp(b, 0, bins - 1);
    bin_of[static_cast<std::size_t>(i)] = b;
    freq[static_cast<std::size_t>(b)] += 1.0;
  }
  SampleWeights out{ArrayXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) out.w(i) = 1.0 / freq[static_cast<std::size_t>(bin_of[static_cast<std::size_t>(i)])];
  out.w /= out.w.mean();
  return out;
}

double percentile_objective(const UnderwoodParams& p, const ObservationSet& obs, const SampleWeights& weights,
                            double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (weights.w.size() != obs.size()) throw ShapeError("weights and observations differ in length");
  const ArrayXd curve = underwood_speed(p, obs.rho);
  const ArrayXd resid = obs.v - curve;
  const ArrayXd below = (-resid).max(0.0);
  const double total = ((1.0 - 2.0 * alpha) * weights.w * below.square()).sum() + (alpha * weights.w * resid.square()).sum();
  // Below points carry (1-alpha) net weight, above points alpha, so the sum is never negative.
  return std::max(total, 0.0);
}

double achieved_percentile(const UnderwoodParams& p, const ObservationSet& obs, const SampleWeights& weights) {
  if (weights.w.size() != obs.size()) throw ShapeError("weights and observations differ in length");
  const ArrayXd resid = obs.v - underwood_speed(p, obs.rho);
  const double denom = (weights.w * resid.abs()).sum();
  if (!(denom > 0.0)) throw NumericalError("achieved percentile undefined: every point lies on the curve");
  return (weights.w * (-resid).max(0.0)).sum() / denom;
}

PercentileFD calibrate_percentile(const ObservationSet& obs, const SampleWeights& weights, double alpha,
                                  const CalibrationOptions& opts) {
  if (obs.size() < 10) throw InsufficientDataError("percentile calibration needs at least 10 observations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");

  const Eigen::Vector2d lo(std::log(opts.rho_cr_min), std::log(opts.v_f_min));
  const Eigen::Vector2d hi(std::log(opts.rho_cr_max), std::log(opts.v_f_max));
  auto to_params = [&](const Eigen::Vector2d& z) {
    const Eigen::Vector2d c = z.cwiseMax(lo).cwiseMin(hi);
    return UnderwoodParams{std::exp(c(0)), std::exp(c(1))};
  };
  auto objective = [&](const Eigen::Vector2d& z) {
    // Quadratic wall outside the box keeps the simplex from drifting off.
    const double wall = ((z - z.cwiseMax(lo).cwiseMin(hi)).squaredNorm());
    return percentile_objective(to_params(z), obs, weights, alpha) * (1.0 + wall) + wall;
  };

  // Coarse log-grid scan seeds the multi-start.
  constexpr int kScan = 9;
  std::vector<std::pair<double, Eigen::Vector2d>> scan;
  for (int a = 0; a < kScan; ++a) {
    for (int b = 0; b < kScan; ++b) {
      const Eigen::Vector2d z(lo(0) + (hi(0) - lo(0)) * (a + 0.5) / kScan, lo(1) + (hi(1) - lo(1)) * (b + 0.5) / kScan);
      scan.emplace_back(objective(z), z);
    }
  }
  std::sort(scan.begin(), scan.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

  const Eigen::Vector2d step = (hi - lo) / kScan;
  SimplexResult<double> best;
  best.value = std::numeric_limits<double>::infinity();
  const int starts = std::min<int>(opts.starts, static_cast<int>(scan.size()));
  for (int s = 0; s < starts; ++s) {
    auto r = nelder_mead<double>(objective, scan[static_cast<std::size_t>(s)].second, step, opts.max_iterations,
                                 opts.tolerance);
    if (r.value < best.value) best = r;
  }
  for (int restart = 0; restart < opts.max_restarts && !best.converged; ++restart) {
    auto r = nelder_mead<double>(objective, best.x, step * 0.1, opts.max_iterations, opts.tolerance);
    if (r.value <= best.value) best = r;
  }
  // Final polish from the best point with a small simplex.
  auto polish = nelder_mead<double>(objective, best.x, step * 0.01, opts.max_iterations, opts.tolerance);
  if (polish.value <= best.value) best = polish;

  PercentileFD out;
  out.alpha = alpha;
  out.params = to_params(best.x);
  out.objective_value = percentile_objective(out.params, obs, weights, alpha);
  out.achieved_alpha = achieved_percentile(out.params, obs, weights);
  if (!best.converged) throw CalibrationError("Nelder-Mead did not converge for alpha " + std::to_string(alpha), out);
  return out;
}

std::vector<double> default_alphas() {
  std::vector<double> a;
  for (int j = 0; j < 15; ++j) a.push_back(0.01 + 0.07 * j);
  return a;
}

PercentileFDFamily calibrate_family(const ObservationSet& obs, const SampleWeights& weights,
                                    const std::vector<double>& alphas, const CalibrationOptions& opts, int jobs) {
  if (alphas.empty()) throw ConfigError("no alphas requested");
  for (std::size_t j = 0; j < alphas.size(); ++j) {
    if (!(alphas[j] > 0.0 && alphas[j] < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (j > 0 && !(alphas[j] > alphas[j - 1])) throw ConfigError("alphas must be strictly increasing");
  }
  PercentileFDFamily family;
  family.members.resize(alphas.size());
  std::vector<std::string> failures(alphas.size());
  parallel_for(alphas.size(), jobs, [&](std::size_t j) {
    try {
      family.members[j] = calibrate_percentile(obs, weights, alphas[j], opts);
    } catch (const Error& e) {
      failures[j] = e.what();
    }
  });
  std::string msg;
  for (std::size_t j = 0; j < alphas.size(); ++j) {
    if (!failures[j].empty()) msg += "alpha=" + std::to_string(alphas[j]) + ": " + failures[j] + "; ";
  }
  if (!msg.empty()) throw NumericalError("family calibration failed: " + msg);
  return family;
}

void export_family(const PercentileFDFamily& family, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "alpha,rho_cr,v_f,achieved_alpha,objective\n" << std::setprecision(17);
  for (const auto& m : family.members) {
    out << m.alpha << ',' << m.params.rho_cr << ',' << m.params.v_f << ',' << m.achieved_alpha << ','
        << m.objective_value << '\n';
  }
}

PercentileFDFamily import_family(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open percentile family " + path.string());
  std::string line;
  std::size_t line_no = 0;
  PercentileFDFamily family;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("alpha", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    PercentileFD m;
    if (!(ss >> m.alpha >> m.params.rho_cr >> m.params.v_f >> m.achieved_alpha >> m.objective_value)) {
      throw ParseError("malformed family row", line_no);
    }
    family.members.push_back(m);
  }
  family.validate();
  return family;
}

}  // namespace spidl
