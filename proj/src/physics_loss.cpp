#include "spidl/physics_loss.hpp"

namespace spidl {

StateJet StateJet::zeros(Eigen::Index n) {
  StateJet s;
  s.rho = s.v = s.rho_x = s.rho_t = s.v_x = s.v_t = ArrayXd::Zero(n);
  return s;
}

void LossWeights::validate() const {
  for (double w : {beta_rho, beta_v, gamma1, gamma2, eta1, eta2, eta3}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
  }
  if (!(tau > 0.0)) throw ConfigError("relaxation time tau must be positive");
}

ResidualScales ResidualScales::from(const NormalizationSpec& n) {
  const double c = n.v_scale * n.t_scale / n.x_scale;
  return {n.rho_scale, n.v_scale, c, n.t_scale, c};
}

ArrayXd conservation_residual(const StateJet& s, const ResidualScales& sc) {
  return (s.rho_t + sc.convection * (s.rho_x * s.v + s.rho * s.v_x)) / sc.residual;
}

namespace {

// Equilibrium speed over v_scale as a function of normalized density.
ArrayXd equilibrium(const ArrayXd& rho, const UnderwoodParams& fd, const ResidualScales& sc) {
  return (fd.v_f / sc.v_scale) * (-rho * (sc.rho_scale / fd.rho_cr)).exp();
}

}  // namespace

PhysicsTerms lwr_residuals(const StateJet& s, const UnderwoodParams& fd, const LossWeights& w, const ResidualScales& sc,
                           StateJet* grad) {
  const auto n = static_cast<double>(s.size());
  if (s.size() == 0) throw DataError("empty collocation set");
  const ArrayXd eq = equilibrium(s.rho, fd, sc);
  const ArrayXd e1 = s.v - eq;
  const ArrayXd e2 = conservation_residual(s, sc);

  PhysicsTerms t;
  t.fd = e1.square().mean();
  t.conservation = e2.square().mean();
  t.total = w.gamma1 * t.fd + w.gamma2 * t.conservation;

  if (grad) {
    const ArrayXd g1 = (2.0 * w.gamma1 / n) * e1;
    const ArrayXd g2 = (2.0 * w.gamma2 / (n * sc.residual)) * e2;
    const double k = sc.rho_scale / fd.rho_cr;
    // d eq / d rho = -k eq
    grad->rho = g1 * (k * eq) + g2 * (sc.convection * s.v_x);
    grad->v = g1 + g2 * (sc.convection * s.rho_x);
    grad->rho_t = g2;
    grad->rho_x = g2 * (sc.convection * s.v);
    grad->v_x = g2 * (sc.convection * s.rho);
    grad->v_t = ArrayXd::Zero(s.size());
  }
  return t;
}

PhysicsTerms arz_residuals(const StateJet& s, const UnderwoodParams& fd, const LossWeights& w, const ResidualScales& sc,
                           StateJet* grad) {
  const auto n = static_cast<double>(s.size());
  if (s.size() == 0) throw DataError("empty collocation set");
  const double k = sc.rho_scale / fd.rho_cr;
  const double relax = sc.t_scale / w.tau;
  const ArrayXd eq = equilibrium(s.rho, fd, sc);
  // Pressure p(rho) = V_e(0) - V_e(rho) over v_scale; dp = p'(rho), d2p = p''(rho).
  const ArrayXd dp = k * eq;
  const ArrayXd d2p = -k * dp;
  const ArrayXd w_t = s.v_t + dp * s.rho_t;
  const ArrayXd w_x = s.v_x + dp * s.rho_x;

  const ArrayXd e1 = s.v - eq;
  const ArrayXd e2 = conservation_residual(s, sc);
  const ArrayXd e3 = (w_t + sc.convection * s.v * w_x - relax * (eq - s.v)) / sc.residual;

  PhysicsTerms t;
  t.fd = e1.square().mean();
  t.conservation = e2.square().mean();
  t.momentum = e3.square().mean();
  t.total = w.eta1 * t.fd + w.eta2 * t.conservation + w.eta3 * t.momentum;

  if (grad) {
    const ArrayXd g1 = (2.0 * w.eta1 / n) * e1;
    const ArrayXd g2 = (2.0 * w.eta2 / (n * sc.residual)) * e2;
    const ArrayXd g3 = (2.0 * w.eta3 / (n * sc.residual)) * e3;
    // d e3 / d rho = p''(rho_t + c v rho_x) - relax * d eq/d rho, with d eq/d rho = -dp.
    const ArrayXd de3_drho = d2p * (s.rho_t + sc.convection * s.v * s.rho_x) + relax * dp;
    grad->rho = g1 * dp + g2 * (sc.convection * s.v_x) + g3 * de3_drho;
    grad->v = g1 + g2 * (sc.convection * s.rho_x) + g3 * (sc.convection * w_x + relax);
    grad->rho_t = g2 + g3 * dp;
    grad->rho_x = g2 * (sc.convection * s.v) + g3 * (sc.convection * s.v * dp);
    grad->v_t = g3;
    grad->v_x = g2 * (sc.convection * s.rho) + g3 * (sc.convection * s.v);
  }
  return t;
}

PhysicsTerms physics_residuals(PhysicsModel model, const StateJet& s, const UnderwoodParams& fd, const LossWeights& w,
                               const ResidualScales& sc, StateJet* grad) {
  return model == PhysicsModel::Lwr ? lwr_residuals(s, fd, w, sc, grad) : arz_residuals(s, fd, w, sc, grad);
}

}  // namespace spidl
