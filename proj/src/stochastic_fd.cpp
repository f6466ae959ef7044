#include "spidl/stochastic_fd.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>

namespace spidl {

namespace {

template <typename Residual>
struct LeastSquaresFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  Residual residual;
  int n_inputs;
  int n_values;

  int inputs() const { return n_inputs; }
  int values() const { return n_values; }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    fvec = residual(x);
    return 0;
  }
};

/// Levenberg-Marquardt with forward-difference Jacobian. Returns the
/// parameter vector with the lowest sum of squares seen (start included).
template <typename Residual>
Eigen::VectorXd least_squares(Residual residual, Eigen::VectorXd x, int n_values, const FitOptions& opts,
                              const char* what) {
  const double start_cost = residual(x).squaredNorm();
  LeastSquaresFunctor<Residual> f{residual, static_cast<int>(x.size()), n_values};
  Eigen::NumericalDiff<LeastSquaresFunctor<Residual>> diff(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LeastSquaresFunctor<Residual>>> lm(diff);
  lm.parameters.maxfev = opts.max_evaluations;
  lm.parameters.xtol = opts.tolerance;
  lm.parameters.ftol = opts.tolerance;
  Eigen::VectorXd start = x;
  const auto status = lm.minimize(x);
  const double cost = residual(x).squaredNorm();
  if (!x.allFinite() || !std::isfinite(cost)) {
    throw NumericalError(std::string(what) + ": least-squares fit diverged");
  }
  if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
    throw NumericalError(std::string(what) + ": improper fit inputs");
  }
  return cost <= start_cost ? x : start;
}

}  // namespace

IntervalStats interval_stats(const ArrayXd& rho, const ArrayXd& v, int intervals, int n_min) {
  if (intervals < 2) throw ConfigError("interval count must be at least 2");
  if (rho.size() != v.size()) throw ShapeError("density and speed samples differ in length");
  if (rho.size() == 0) throw InsufficientDataError("no samples for interval statistics");
  const double top = rho.maxCoeff();
  IntervalStats s;
  s.edges = ArrayXd::LinSpaced(intervals + 1, 0.0, top > 0.0 ? top : 1.0);
  s.counts = ArrayXd::Zero(intervals);
  s.means = ArrayXd::Zero(intervals);
  s.variances = ArrayXd::Zero(intervals);
  const double width = s.edges(1) - s.edges(0);

  std::vector<std::vector<double>> members(static_cast<std::size_t>(intervals));
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    int b = static_cast<int>(rho(i) / width);
    b = std::clamp(b, 0, intervals - 1);
    members[static_cast<std::size_t>(b)].push_back(v(i));
  }
  for (int b = 0; b < intervals; ++b) {
    const auto& m = members[static_cast<std::size_t>(b)];
    const double n = static_cast<double>(m.size());
    s.counts(b) = n;
    if (m.empty()) continue;
    double mean = 0.0;
    for (double x : m) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : m) ss += (x - mean) * (x - mean);
    s.means(b) = mean;
    s.variances(b) = m.size() > 1 ? ss / (n - 1.0) : 0.0;
  }
  s.usable = s.counts >= static_cast<double>(std::max(n_min, 2));
  return s;
}

double s3_speed(const S3Params& p, double rho) {
  if (rho < 0.0) throw DomainError("density must be non-negative");
  return p.v_f / std::pow(1.0 + std::pow(rho / p.rho_cr, p.m_shape), 2.0 / p.m_shape);
}

S3Params fit_s3(const IntervalStats& stats, const FitOptions& opts) {
  std::vector<double> centers, means, counts;
  for (Eigen::Index i = 0; i < stats.bins(); ++i) {
    if (!stats.usable(i)) continue;
    centers.push_back(stats.center(i));
    means.push_back(stats.means(i));
    counts.push_back(stats.counts(i));
  }
  if (centers.size() < 3) throw InsufficientDataError("S3 fit needs at least 3 usable intervals");
  const auto n = static_cast<Eigen::Index>(centers.size());

  auto residual = [&](const Eigen::VectorXd& z) {
    const S3Params p{std::exp(z(0)), std::exp(z(1)), std::exp(z(2))};
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = std::sqrt(counts[k]) * (s3_speed(p, centers[k]) - means[k]);
    }
    return r;
  };

  const double v_top = *std::max_element(means.begin(), means.end());
  double rho_half = centers.back();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (means[k] <= 0.5 * v_top) {
      rho_half = centers[k];
      break;
    }
  }
  Eigen::VectorXd z(3);
  z << std::log(v_top * 1.05), std::log(rho_half), std::log(2.0);
  z = least_squares(residual, z, static_cast<int>(n), opts, "S3 fit");
  return {std::exp(z(0)), std::exp(z(1)), std::exp(z(2))};
}

double VarianceCurve::operator()(double rho) const {
  if (rho <= 0.0) return 0.0;
  const double u = (std::log(rho) - mu_ln) / sigma_ln;
  return amplitude / (rho * sigma_ln * std::sqrt(2.0 * std::numbers::pi)) * std::exp(-0.5 * u * u);
}

VarianceCurve fit_variance_curve(const IntervalStats& stats, const FitOptions& opts) {
  std::vector<double> centers, vars;
  for (Eigen::Index i = 0; i < stats.bins(); ++i) {
    if (!stats.usable(i)) continue;
    centers.push_back(stats.center(i));
    vars.push_back(stats.variances(i));
  }
  if (centers.size() < 3) throw InsufficientDataError("variance fit needs at least 3 usable intervals");
  const auto n = static_cast<Eigen::Index>(centers.size());

  auto curve_of = [](const Eigen::VectorXd& z) {
    VarianceCurve c;
    c.amplitude = std::exp(z(0));
    c.mu_ln = z(1);
    c.sigma_ln = std::exp(z(2));
    return c;
  };
  auto residual = [&](const Eigen::VectorXd& z) {
    const VarianceCurve c = curve_of(z);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = c(centers[k]) - vars[k];
    }
    return r;
  };

  const auto peak = static_cast<std::size_t>(std::max_element(vars.begin(), vars.end()) - vars.begin());
  const double sigma0 = 0.5;
  const double peak_height = std::max(vars[peak], 1e-12);
  const double rho_peak = centers[peak];
  Eigen::VectorXd z(3);
  z << std::log(peak_height * rho_peak * sigma0 * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * sigma0 * sigma0)),
      std::log(rho_peak) + sigma0 * sigma0, std::log(sigma0);
  z = least_squares(residual, z, static_cast<int>(n), opts, "variance fit");

  VarianceCurve c = curve_of(z);
  double mean = 0.0;
  for (double v : vars) mean += v;
  mean /= static_cast<double>(n);
  double ss_tot = 0.0;
  for (double v : vars) ss_tot += (v - mean) * (v - mean);
  const double ss_res = residual(z).squaredNorm();
  c.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  c.poor_fit = c.r_squared < 0.2;
  return c;
}

BetaShapes beta_shapes_from_moments(double mu_hat, double omega_hat, double clamp_fraction, double omega_floor) {
  if (!(mu_hat > 0.0 && mu_hat < 1.0)) {
    throw DomainError("normalized mean " + std::to_string(mu_hat) + " outside (0,1); v_max must exceed fitted means");
  }
  BetaShapes s;
  s.mu_hat = mu_hat;
  const double limit = mu_hat * (1.0 - mu_hat);
  double omega = std::max(omega_hat, omega_floor * limit);
  if (omega > clamp_fraction * limit) {
    omega = clamp_fraction * limit;
    s.clamped = true;
  }
  s.omega_hat = omega;
  const double common = (mu_hat - mu_hat * mu_hat - omega) / omega;
  s.alpha = mu_hat * common;
  s.beta = (1.0 - mu_hat) * common;
  return s;
}

BetaShapes beta_shapes(const BetaProcess& process, double rho) {
  if (rho < 0.0 || rho > process.rho_max * (1.0 + 1e-12)) {
    throw DomainError("density " + std::to_string(rho) + " outside process domain [0, rho_max]");
  }
  const double mu = s3_speed(process.mean_curve, rho) / process.v_max;
  const double omega = process.var_curve(rho) / (process.v_max * process.v_max);
  return beta_shapes_from_moments(mu, omega, process.clamp_fraction, process.omega_floor);
}

double beta_log_pdf(const BetaShapes& s, double v_max, double v) {
  if (v < 0.0 || v > v_max) return -std::numeric_limits<double>::infinity();
  const double u = v / v_max;
  const double log_b = std::lgamma(s.alpha) + std::lgamma(s.beta) - std::lgamma(s.alpha + s.beta);
  const double a_term = s.alpha == 1.0 ? 0.0 : (s.alpha - 1.0) * std::log(u);
  const double b_term = s.beta == 1.0 ? 0.0 : (s.beta - 1.0) * std::log1p(-u);
  return a_term + b_term - log_b - std::log(v_max);
}

double beta_pdf(const BetaShapes& s, double v_max, double v) {
  if (v < 0.0 || v > v_max) return 0.0;
  return std::exp(beta_log_pdf(s, v_max, v));
}

double beta_pdf(const BetaProcess& process, double rho, double v) {
  return beta_pdf(beta_shapes(process, rho), process.v_max, v);
}

double beta_log_pdf_dv(const BetaShapes& s, double v_max, double v) {
  const double u = v / v_max;
  return ((s.alpha - 1.0) / u - (s.beta - 1.0) / (1.0 - u)) / v_max;
}

double beta_entropy(const BetaShapes& s, double v_max) {
  using boost::math::digamma;
  const double a = s.alpha, b = s.beta;
  const double log_b = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return log_b - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b) + std::log(v_max);
}

double beta_interval_mass(const BetaShapes& s, double v_max, double lo, double hi) {
  const double a = std::clamp(lo / v_max, 0.0, 1.0);
  const double b = std::clamp(hi / v_max, 0.0, 1.0);
  if (b <= a) return 0.0;
  return boost::math::ibeta(s.alpha, s.beta, b) - boost::math::ibeta(s.alpha, s.beta, a);
}

std::vector<double> beta_sample(const BetaProcess& process, double rho, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample count must be positive");
  const BetaShapes s = beta_shapes(process, rho);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> ga(s.alpha, 1.0);
  std::gamma_distribution<double> gb(s.beta, 1.0);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) {
    const double x = ga(rng);
    const double y = gb(rng);
    v = process.v_max * x / (x + y);
  }
  return out;
}

BetaProcess fit_beta_process(const ObservationSet& obs, const ProcessOptions& opts) {
  const IntervalStats stats = interval_stats(obs, opts.intervals, opts.n_min);
  if (stats.usable_count() < 3) {
    throw InsufficientDataError("only " + std::to_string(stats.usable_count()) +
                                " usable density intervals; at least 3 are required");
  }
  BetaProcess p;
  p.mean_curve = fit_s3(stats, opts.fit);
  p.var_curve = fit_variance_curve(stats, opts.fit);
  p.v_max = opts.v_max_factor * obs.v.maxCoeff();
  p.rho_max = obs.rho.maxCoeff();
  if (!(p.mean_curve.v_f < p.v_max)) {
    throw NumericalError("fitted free-flow speed " + std::to_string(p.mean_curve.v_f) + " is not below v_max " +
                         std::to_string(p.v_max));
  }
  return p;
}

void save_process(const BetaProcess& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "[s3]\nv_f=" << p.mean_curve.v_f << "\nrho_cr=" << p.mean_curve.rho_cr << "\nm=" << p.mean_curve.m_shape
      << "\n\n[variance]\namplitude=" << p.var_curve.amplitude << "\nmu_ln=" << p.var_curve.mu_ln
      << "\nsigma_ln=" << p.var_curve.sigma_ln << "\nr_squared=" << p.var_curve.r_squared
      << "\n\n[domain]\nv_max=" << p.v_max << "\nrho_max=" << p.rho_max << "\nclamp_fraction=" << p.clamp_fraction
      << "\nomega_floor=" << p.omega_floor << "\n";
}

BetaProcess load_process(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree t;
  try {
    pt::read_ini(path.string(), t);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  BetaProcess p;
  try {
    p.mean_curve.v_f = t.get<double>("s3.v_f");
    p.mean_curve.rho_cr = t.get<double>("s3.rho_cr");
    p.mean_curve.m_shape = t.get<double>("s3.m");
    p.var_curve.amplitude = t.get<double>("variance.amplitude");
    p.var_curve.mu_ln = t.get<double>("variance.mu_ln");
    p.var_curve.sigma_ln = t.get<double>("variance.sigma_ln");
    p.var_curve.r_squared = t.get("variance.r_squared", 1.0);
    p.var_curve.poor_fit = p.var_curve.r_squared < 0.2;
    p.v_max = t.get<double>("domain.v_max");
    p.rho_max = t.get<double>("domain.rho_max");
    p.clamp_fraction = t.get("domain.clamp_fraction", p.clamp_fraction);
    p.omega_floor = t.get("domain.omega_floor", p.omega_floor);
  } catch (const pt::ptree_error& e) {
    throw ParseError(std::string("process file: ") + e.what(), 0);
  }
  return p;
}

void export_spectrum(const BetaProcess& p, int points, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "rho,alpha_shape,beta_shape,mean,variance\n" << std::setprecision(12);
  for (int k = 1; k <= points; ++k) {
    const double rho = p.rho_max * k / points;
    const BetaShapes s = beta_shapes(p, rho);
    out << rho << ',' << s.alpha << ',' << s.beta << ',' << s.mu_hat * p.v_max << ','
        << s.omega_hat * p.v_max * p.v_max << '\n';
  }
}

}  // namespace spidl
