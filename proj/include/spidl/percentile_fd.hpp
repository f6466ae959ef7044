#pragma once

#include "spidl/common.hpp"
#include "spidl/grid.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace spidl {

/// Underwood exponential speed-density law v = v_f exp(-rho / rho_cr).
struct UnderwoodParams {
  double rho_cr = 0.21;  // veh/m
  double v_f = 23.76;    // m/s

  void validate() const {
    if (!(rho_cr > 0.0) || !(v_f > 0.0)) throw DomainError("Underwood parameters must be positive");
  }
};

inline double underwood_speed(const UnderwoodParams& p, double rho) {
  if (rho < 0.0) throw DomainError("density must be non-negative");
  return p.v_f * std::exp(-rho / p.rho_cr);
}

template <typename Derived>
auto underwood_speed(const UnderwoodParams& p, const Eigen::ArrayBase<Derived>& rho) {
  return p.v_f * (-rho / p.rho_cr).exp();
}

/// max(v_phy(rho) - v, 0): how far a point sits below the curve.
inline double below_curve_residual(const UnderwoodParams& p, double rho, double v) {
  return std::max(underwood_speed(p, rho) - v, 0.0);
}

struct PercentileFD {
  double alpha = 0.5;
  UnderwoodParams params;
  double achieved_alpha = 0.5;
  double objective_value = 0.0;
};

struct PercentileFDFamily {
  std::vector<PercentileFD> members;

  std::size_t size() const { return members.size(); }
  void validate() const;
};

/// One positive weight per observation, normalized to mean one.
struct SampleWeights {
  ArrayXd w;

  static SampleWeights uniform(Eigen::Index n) { return {ArrayXd::Ones(n)}; }
  /// Inverse frequency of each point's density bin over `bins` equal-width bins.
  static SampleWeights density_balanced(const ArrayXd& rho, int bins = 30);
};

double percentile_objective(const UnderwoodParams& p, const ObservationSet& obs, const SampleWeights& weights,
                            double alpha);
double achieved_percentile(const UnderwoodParams& p, const ObservationSet& obs, const SampleWeights& weights);

struct CalibrationOptions {
  int starts = 5;
  int max_iterations = 2000;
  int max_restarts = 3;
  double tolerance = 1e-12;
  double rho_cr_min = 0.01, rho_cr_max = 1.0;
  double v_f_min = 1.0, v_f_max = 50.0;
  double alpha_tolerance = 0.03;
};

/// Thrown when no start converges; carries the best point found.
struct CalibrationError : NumericalError {
  CalibrationError(const std::string& what, PercentileFD best) : NumericalError(what), best_so_far(best) {}
  PercentileFD best_so_far;
};

PercentileFD calibrate_percentile(const ObservationSet& obs, const SampleWeights& weights, double alpha,
                                  const CalibrationOptions& opts = {});

std::vector<double> default_alphas();

PercentileFDFamily calibrate_family(const ObservationSet& obs, const SampleWeights& weights,
                                    const std::vector<double>& alphas, const CalibrationOptions& opts = {},
                                    int jobs = 1);

void export_family(const PercentileFDFamily& family, const std::filesystem::path& path);
PercentileFDFamily import_family(const std::filesystem::path& path);

}  // namespace spidl
