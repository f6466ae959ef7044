#pragma once

#include "spidl/common.hpp"
#include "spidl/grid.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace spidl {

/// Equal-width density bins with per-bin speed statistics.
struct IntervalStats {
  ArrayXd edges;      // I + 1 edges, veh/m
  ArrayXd counts;     // n_i
  ArrayXd means;      // mean speed per bin, m/s
  ArrayXd variances;  // unbiased speed variance per bin, (m/s)^2
  Eigen::Array<bool, Eigen::Dynamic, 1> usable;  // n_i >= n_min

  Eigen::Index bins() const { return counts.size(); }
  double center(Eigen::Index i) const { return 0.5 * (edges(i) + edges(i + 1)); }
  Eigen::Index usable_count() const { return usable.count(); }
};

IntervalStats interval_stats(const ArrayXd& rho, const ArrayXd& v, int intervals, int n_min);
inline IntervalStats interval_stats(const ObservationSet& obs, int intervals, int n_min) {
  return interval_stats(obs.rho, obs.v, intervals, n_min);
}

/// Three-parameter S-shaped speed-density model.
struct S3Params {
  double v_f = 25.0;
  double rho_cr = 0.2;
  double m_shape = 2.0;
};

double s3_speed(const S3Params& p, double rho);

template <typename Derived>
auto s3_speed(const S3Params& p, const Eigen::ArrayBase<Derived>& rho) {
  return p.v_f / (1.0 + (rho / p.rho_cr).pow(p.m_shape)).pow(2.0 / p.m_shape);
}

struct FitOptions {
  int max_evaluations = 4000;
  double tolerance = 1e-12;
};

S3Params fit_s3(const IntervalStats& stats, const FitOptions& opts = {});

/// Scaled log-normal density used as the speed-variance profile:
/// omega(rho) = A / (rho sigma sqrt(2 pi)) exp(-(ln rho - mu)^2 / (2 sigma^2)).
struct VarianceCurve {
  double amplitude = 1.0;
  double mu_ln = std::log(0.1);
  double sigma_ln = 0.5;
  double r_squared = 1.0;
  bool poor_fit = false;

  double operator()(double rho) const;
  double peak_density() const { return std::exp(mu_ln - sigma_ln * sigma_ln); }
};

VarianceCurve fit_variance_curve(const IntervalStats& stats, const FitOptions& opts = {});

struct BetaShapes {
  double alpha = 1.0;
  double beta = 1.0;
  double mu_hat = 0.5;     // normalized mean
  double omega_hat = 0.0;  // normalized variance after clamp
  bool clamped = false;
};

/// Density-indexed Beta speed distribution on [0, v_max].
struct BetaProcess {
  S3Params mean_curve;
  VarianceCurve var_curve;
  double v_max = 30.0;
  double rho_max = 0.5;
  double clamp_fraction = 0.95;
  double omega_floor = 1e-6;
};

/// Moment matching with the validity clamp omega <= clamp_fraction * mu (1 - mu)
/// and a floor that keeps the distribution non-degenerate.
BetaShapes beta_shapes_from_moments(double mu_hat, double omega_hat, double clamp_fraction = 0.95,
                                    double omega_floor = 1e-6);
BetaShapes beta_shapes(const BetaProcess& process, double rho);

/// Density of speed v at density rho; zero outside [0, v_max].
double beta_pdf(const BetaProcess& process, double rho, double v);
double beta_pdf(const BetaShapes& shapes, double v_max, double v);
double beta_log_pdf(const BetaShapes& shapes, double v_max, double v);
/// d/dv of beta_log_pdf.
double beta_log_pdf_dv(const BetaShapes& shapes, double v_max, double v);
/// Differential entropy of the scaled Beta distribution (nats).
double beta_entropy(const BetaShapes& shapes, double v_max);
/// Mass of [lo, hi] under the scaled Beta distribution.
double beta_interval_mass(const BetaShapes& shapes, double v_max, double lo, double hi);

std::vector<double> beta_sample(const BetaProcess& process, double rho, int n, std::uint64_t seed);

struct ProcessOptions {
  int intervals = 30;
  int n_min = 20;
  double v_max_factor = 1.05;
  FitOptions fit{};
};

BetaProcess fit_beta_process(const ObservationSet& obs, const ProcessOptions& opts = {});

void save_process(const BetaProcess& process, const std::filesystem::path& path);
BetaProcess load_process(const std::filesystem::path& path);
/// CSV rho,alpha_shape,beta_shape,mean,variance over `points` densities in (0, rho_max].
void export_spectrum(const BetaProcess& process, int points, const std::filesystem::path& path);

}  // namespace spidl
