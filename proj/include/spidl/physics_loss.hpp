#pragma once

#include "spidl/common.hpp"
#include "spidl/grid.hpp"
#include "spidl/percentile_fd.hpp"

namespace spidl {

/// States and their first derivatives at a batch of points, all in
/// normalized units (inputs and outputs scaled to the unit box).
struct StateJet {
  ArrayXd rho, v, rho_x, rho_t, v_x, v_t;

  Eigen::Index size() const { return rho.size(); }
  static StateJet zeros(Eigen::Index n);
};

/// Weights of the data and physics terms; tau is the ARZ relaxation time in seconds.
struct LossWeights {
  double beta_rho = 1.0, beta_v = 1.0;
  double gamma1 = 1.0, gamma2 = 1.0;
  double eta1 = 1.0, eta2 = 1.0, eta3 = 1.0;
  double tau = 5.0;

  void validate() const;
};

/// Conversion factors that turn physical-unit residuals into dimensionless ones.
/// The conservation residual is divided by rho_scale * v_scale / x_scale and the
/// momentum residual by v_scale^2 / x_scale, i.e. time is measured on the
/// convective scale x_scale / v_scale.
struct ResidualScales {
  double rho_scale = 1.0;
  double v_scale = 1.0;
  double convection = 1.0;  // v_scale * t_scale / x_scale
  double t_scale = 1.0;
  double residual = 1.0;    // divisor of the conservation and momentum residuals

  static ResidualScales from(const NormalizationSpec& n);
};

struct PhysicsTerms {
  double fd = 0.0;            // speed vs equilibrium curve
  double conservation = 0.0;  // mass balance
  double momentum = 0.0;      // ARZ speed equation
  double total = 0.0;         // weighted sum
};

enum class PhysicsModel { Lwr, Arz };

/// Weighted mean-square physics residuals. When `grad` is non-null it receives
/// d total / d (each jet component).
PhysicsTerms lwr_residuals(const StateJet& s, const UnderwoodParams& fd, const LossWeights& w, const ResidualScales& sc,
                           StateJet* grad = nullptr);
PhysicsTerms arz_residuals(const StateJet& s, const UnderwoodParams& fd, const LossWeights& w, const ResidualScales& sc,
                           StateJet* grad = nullptr);
PhysicsTerms physics_residuals(PhysicsModel model, const StateJet& s, const UnderwoodParams& fd, const LossWeights& w,
                               const ResidualScales& sc, StateJet* grad = nullptr);

/// Pointwise conservation residual in dimensionless units.
ArrayXd conservation_residual(const StateJet& s, const ResidualScales& sc);

}  // namespace spidl
