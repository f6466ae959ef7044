#include "spidl/alpha_spidl.hpp"

#include "spidl/adam.hpp"
#include "spidl/parallel.hpp"

#include <cmath>
#include <random>

namespace spidl {

PinnModel::PinnModel(std::vector<Network> nets, NormalizationSpec norm) : nets_(std::move(nets)), norm_(norm) {
  if (nets_.size() == 1) {
    if (nets_[0].inputs() != 2 || nets_[0].outputs() != 2) throw ShapeError("shared PINN must map 2 -> 2");
  } else if (nets_.size() == 2) {
    for (const auto& n : nets_) {
      if (n.inputs() != 2 || n.outputs() != 1) throw ShapeError("twin PINN networks must map 2 -> 1");
    }
  } else {
    throw ConfigError("PINN holds one shared or two twin networks");
  }
}

PinnModel PinnModel::create(const std::vector<int>& hidden, bool twin, std::uint64_t seed,
                            const NormalizationSpec& norm) {
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  std::vector<Network> nets;
  if (twin) {
    sizes.push_back(1);
    nets.push_back(Network::glorot(sizes, Activation::Tanh, Activation::Identity, seed));
    nets.push_back(Network::glorot(sizes, Activation::Tanh, Activation::Identity, seed + 0x9E3779B97F4A7C15ULL));
  } else {
    sizes.push_back(2);
    nets.push_back(Network::glorot(sizes, Activation::Tanh, Activation::Identity, seed));
  }
  return PinnModel(std::move(nets), norm);
}

Eigen::Index PinnModel::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& net : nets_) n += net.parameter_count();
  return n;
}

VectorXd PinnModel::flatten() const {
  VectorXd p(parameter_count());
  Eigen::Index o = 0;
  for (const auto& net : nets_) {
    p.segment(o, net.parameter_count()) = net.flatten();
    o += net.parameter_count();
  }
  return p;
}

void PinnModel::assign(const VectorXd& p) {
  if (p.size() != parameter_count()) throw ShapeError("parameter vector length mismatch");
  Eigen::Index o = 0;
  for (auto& net : nets_) {
    net.assign(p.segment(o, net.parameter_count()));
    o += net.parameter_count();
  }
}

MatrixXd PinnModel::forward(const MatrixXd& X) const {
  if (!twin()) return nets_[0].forward(X);
  MatrixXd out(2, X.cols());
  out.row(0) = nets_[0].forward(X);
  out.row(1) = nets_[1].forward(X);
  return out;
}

StateJet PinnModel::jet(const MatrixXd& X, std::vector<MlpTape<double>>* tapes) const {
  static const std::vector<int> kTangents{0, 1};
  StateJet s;
  if (tapes) tapes->resize(nets_.size());
  if (!twin()) {
    const Jet<double> j = nets_[0].forward_jet(X, kTangents, tapes ? &(*tapes)[0] : nullptr);
    s.rho = j.value.row(0).transpose().array();
    s.v = j.value.row(1).transpose().array();
    s.rho_x = j.d[0].row(0).transpose().array();
    s.v_x = j.d[0].row(1).transpose().array();
    s.rho_t = j.d[1].row(0).transpose().array();
    s.v_t = j.d[1].row(1).transpose().array();
    return s;
  }
  const Jet<double> jr = nets_[0].forward_jet(X, kTangents, tapes ? &(*tapes)[0] : nullptr);
  const Jet<double> jv = nets_[1].forward_jet(X, kTangents, tapes ? &(*tapes)[1] : nullptr);
  s.rho = jr.value.row(0).transpose().array();
  s.rho_x = jr.d[0].row(0).transpose().array();
  s.rho_t = jr.d[1].row(0).transpose().array();
  s.v = jv.value.row(0).transpose().array();
  s.v_x = jv.d[0].row(0).transpose().array();
  s.v_t = jv.d[1].row(0).transpose().array();
  return s;
}

MatrixXd PinnModel::forward_taped(const MatrixXd& X, std::vector<MlpTape<double>>& tapes) const {
  tapes.resize(nets_.size());
  if (!twin()) return nets_[0].forward_jet(X, {}, &tapes[0]).value;
  MatrixXd out(2, X.cols());
  out.row(0) = nets_[0].forward_jet(X, {}, &tapes[0]).value;
  out.row(1) = nets_[1].forward_jet(X, {}, &tapes[1]).value;
  return out;
}

VectorXd PinnModel::backward(const std::vector<MlpTape<double>>& tapes, const StateJet& g) const {
  const Eigen::Index n = g.size();
  if (!twin()) {
    MatrixXd gv(2, n), gx(2, n), gt(2, n);
    gv.row(0) = g.rho.matrix().transpose();
    gv.row(1) = g.v.matrix().transpose();
    gx.row(0) = g.rho_x.matrix().transpose();
    gx.row(1) = g.v_x.matrix().transpose();
    gt.row(0) = g.rho_t.matrix().transpose();
    gt.row(1) = g.v_t.matrix().transpose();
    return nets_[0].backward(tapes[0], gv, {gx, gt}).params;
  }
  VectorXd out(parameter_count());
  const Eigen::Index n0 = nets_[0].parameter_count();
  out.head(n0) = nets_[0]
                     .backward(tapes[0], g.rho.matrix().transpose(),
                               {MatrixXd(g.rho_x.matrix().transpose()), MatrixXd(g.rho_t.matrix().transpose())})
                     .params;
  out.tail(nets_[1].parameter_count()) =
      nets_[1]
          .backward(tapes[1], g.v.matrix().transpose(),
                    {MatrixXd(g.v_x.matrix().transpose()), MatrixXd(g.v_t.matrix().transpose())})
          .params;
  return out;
}

VectorXd PinnModel::backward_values(const std::vector<MlpTape<double>>& tapes, const MatrixXd& grad) const {
  if (!twin()) return nets_[0].backward(tapes[0], grad).params;
  VectorXd out(parameter_count());
  out.head(nets_[0].parameter_count()) = nets_[0].backward(tapes[0], grad.row(0)).params;
  out.tail(nets_[1].parameter_count()) = nets_[1].backward(tapes[1], grad.row(1)).params;
  return out;
}

NetworkBundle PinnModel::bundle(const std::string& prefix) const {
  NetworkBundle b;
  if (!twin()) {
    b.emplace(prefix + "shared", nets_[0]);
  } else {
    b.emplace(prefix + "density", nets_[0]);
    b.emplace(prefix + "speed", nets_[1]);
  }
  return b;
}

PinnModel PinnModel::from_bundle(const NetworkBundle& b, const std::string& prefix, const NormalizationSpec& norm) {
  if (auto it = b.find(prefix + "shared"); it != b.end()) return PinnModel({it->second}, norm);
  auto r = b.find(prefix + "density");
  auto v = b.find(prefix + "speed");
  if (r == b.end() || v == b.end()) throw DataError("checkpoint lacks networks for " + prefix);
  return PinnModel({r->second, v->second}, norm);
}

MatrixXd normalized_inputs(const ArrayXd& x, const ArrayXd& t, const NormalizationSpec& norm) {
  MatrixXd X(2, x.size());
  X.row(0) = norm.norm_x(x).matrix().transpose();
  X.row(1) = norm.norm_t(t).matrix().transpose();
  return X;
}

NormalizedObservations normalize_observations(const ObservationSet& obs, const NormalizationSpec& norm) {
  return {normalized_inputs(obs.x, obs.t, norm), obs.rho / norm.rho_scale, obs.v / norm.v_scale};
}

double data_loss(const PinnModel& model, const NormalizedObservations& obs, const LossWeights& w, VectorXd* grad) {
  const Eigen::Index n = obs.X.cols();
  if (n == 0) throw DataError("empty observation set");
  std::vector<MlpTape<double>> tapes;
  const MatrixXd y = grad ? model.forward_taped(obs.X, tapes) : model.forward(obs.X);
  const ArrayXd er = y.row(0).transpose().array() - obs.rho;
  const ArrayXd ev = y.row(1).transpose().array() - obs.v;
  const double loss = w.beta_rho * er.square().mean() + w.beta_v * ev.square().mean();
  if (grad) {
    MatrixXd g(2, n);
    g.row(0) = ((2.0 * w.beta_rho / static_cast<double>(n)) * er).matrix().transpose();
    g.row(1) = ((2.0 * w.beta_v / static_cast<double>(n)) * ev).matrix().transpose();
    *grad = model.backward_values(tapes, g);
  }
  return loss;
}

double data_loss(const PinnModel& model, const ObservationSet& obs, const LossWeights& w, VectorXd* grad) {
  if (obs.size() == 0) throw DataError("empty observation set");
  return data_loss(model, normalize_observations(obs, model.normalization()), w, grad);
}

PhysicsTerms physics_loss(const PinnModel& model, const MatrixXd& colloc_X, PhysicsModel physics,
                          const UnderwoodParams& fd, const LossWeights& w, VectorXd* grad) {
  if (colloc_X.cols() == 0) throw DataError("empty collocation set");
  std::vector<MlpTape<double>> tapes;
  const StateJet s = model.jet(colloc_X, grad ? &tapes : nullptr);
  const ResidualScales sc = ResidualScales::from(model.normalization());
  if (!grad) return physics_residuals(physics, s, fd, w, sc);
  StateJet g;
  const PhysicsTerms t = physics_residuals(physics, s, fd, w, sc, &g);
  *grad = model.backward(tapes, g);
  return t;
}

PhysicsTerms lwr_physics_loss(const PinnModel& model, const CollocationSet& colloc, const UnderwoodParams& fd,
                              const LossWeights& w, VectorXd* grad) {
  return physics_loss(model, normalized_inputs(colloc.x, colloc.t, model.normalization()), PhysicsModel::Lwr, fd, w,
                      grad);
}

PhysicsTerms arz_physics_loss(const PinnModel& model, const CollocationSet& colloc, const UnderwoodParams& fd,
                              const LossWeights& w, VectorXd* grad) {
  return physics_loss(model, normalized_inputs(colloc.x, colloc.t, model.normalization()), PhysicsModel::Arz, fd, w,
                      grad);
}

namespace {

MatrixXd take_columns(const MatrixXd& M, const std::vector<Eigen::Index>& idx) {
  MatrixXd out(M.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(idx[j]);
  return out;
}

ArrayXd take(const ArrayXd& a, const std::vector<Eigen::Index>& idx) {
  ArrayXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j)) = a(idx[j]);
  return out;
}

std::vector<Eigen::Index> draw(std::mt19937_64& rng, Eigen::Index n, int batch) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

double full_loss(const PinnModel& model, const NormalizedObservations& obs, const MatrixXd& colloc, PhysicsModel physics,
                 const UnderwoodParams& fd, const LossWeights& w) {
  constexpr Eigen::Index kChunk = 8192;
  double phys = 0.0;
  for (Eigen::Index s = 0; s < colloc.cols(); s += kChunk) {
    const Eigen::Index len = std::min(kChunk, colloc.cols() - s);
    phys += physics_loss(model, colloc.middleCols(s, len), physics, fd, w).total * static_cast<double>(len);
  }
  return data_loss(model, obs, w) + phys / static_cast<double>(colloc.cols());
}

}  // namespace

AlphaMember train_member(const ObservationSet& obs, const CollocationSet& colloc, const UnderwoodParams& fd,
                         double alpha, PhysicsModel physics, const LossWeights& weights, const TrainConfig& config,
                         std::uint64_t seed, const NormalizationSpec& norm) {
  weights.validate();
  fd.validate();
  if (obs.size() == 0) throw DataError("empty observation set");
  if (colloc.size() == 0) throw DataError("empty collocation set");

  AlphaMember member;
  member.alpha = alpha;
  member.fd = fd;
  member.model = PinnModel::create(config.hidden, config.twin, seed, norm);

  const NormalizedObservations nobs = normalize_observations(obs, norm);
  MatrixXd colloc_X = normalized_inputs(colloc.x, colloc.t, norm);
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  member.initial_loss = full_loss(member.model, nobs, colloc_X, physics, fd, weights);

  Adam<double> adam(config.learning_rate);
  VectorXd params = member.model.flatten();
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  member.trace.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.resample_collocation && epoch > 0) {
      for (Eigen::Index j = 0; j < colloc_X.cols(); ++j) colloc_X.col(j) << unit(rng), unit(rng);
    }
    VectorXd g_data, g_phys;
    double l_data = 0.0;
    PhysicsTerms terms;
    if (config.obs_batch > 0 && config.obs_batch < nobs.X.cols()) {
      const auto idx = draw(rng, nobs.X.cols(), config.obs_batch);
      const NormalizedObservations b{take_columns(nobs.X, idx), take(nobs.rho, idx), take(nobs.v, idx)};
      l_data = data_loss(member.model, b, weights, &g_data);
    } else {
      l_data = data_loss(member.model, nobs, weights, &g_data);
    }
    if (config.colloc_batch > 0 && config.colloc_batch < colloc_X.cols()) {
      const auto idx = draw(rng, colloc_X.cols(), config.colloc_batch);
      terms = physics_loss(member.model, take_columns(colloc_X, idx), physics, fd, weights, &g_phys);
    } else {
      terms = physics_loss(member.model, colloc_X, physics, fd, weights, &g_phys);
    }
    const double total = l_data + terms.total;
    if (!std::isfinite(total) || !g_data.allFinite() || !g_phys.allFinite()) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch), member.trace);
    }
    if (total < best - config.min_delta) {
      best = total;
      since_best = 0;
    } else {
      ++since_best;
    }
    member.trace.push_back({l_data, terms.total, total, std::min(best, total)});

    adam.step(params, g_data + g_phys);
    member.model.assign(params);
    if (since_best >= config.patience) break;
  }
  if (!member.model.networks().front().all_finite()) throw TrainingError("non-finite parameters", member.trace);
  member.final_loss = full_loss(member.model, nobs, normalized_inputs(colloc.x, colloc.t, norm), physics, fd, weights);
  return member;
}

std::pair<MatrixXd, MatrixXd> predict_grid(const PinnModel& model, const GridGeometry& g) {
  const NormalizationSpec& norm = model.normalization();
  MatrixXd rho(g.nx, g.nt), v(g.nx, g.nt);
  MatrixXd X(2, g.nt);
  for (Eigen::Index i = 0; i < g.nx; ++i) {
    for (Eigen::Index k = 0; k < g.nt; ++k) X.col(k) << norm.norm_x(g.x_at(i)), norm.norm_t(g.t_at(k));
    const MatrixXd y = model.forward(X);
    rho.row(i) = y.row(0) * norm.rho_scale;
    v.row(i) = y.row(1) * norm.v_scale;
  }
  return {rho, v};
}

FamilyResult train_family(const ObservationSet& obs, const CollocationSet& colloc, const PercentileFDFamily& family,
                          PhysicsModel physics, const LossWeights& weights, const TrainConfig& config,
                          std::uint64_t seed, const NormalizationSpec& norm, const GridGeometry& geometry, int jobs) {
  if (family.size() < 2) throw ConfigError("family estimation needs at least two members");
  family.validate();
  const std::size_t m = family.size();
  FamilyResult out;
  out.members.resize(m);
  std::vector<std::string> failures(m);
  parallel_for(m, jobs, [&](std::size_t j) {
    try {
      const std::uint64_t member_seed = config.vary_member_seeds ? seed + j : seed;
      out.members[j] = train_member(obs, colloc, family.members[j].params, family.members[j].alpha, physics, weights,
                                    config, member_seed, norm);
    } catch (const Error& e) {
      failures[j] = e.what();
    }
  });
  std::string msg;
  for (std::size_t j = 0; j < m; ++j) {
    if (!failures[j].empty()) msg += "alpha=" + std::to_string(family.members[j].alpha) + ": " + failures[j] + "; ";
  }
  if (!msg.empty()) throw NumericalError("family training failed for members: " + msg);

  std::vector<MatrixXd> rho_layers, v_layers;
  for (const auto& member : out.members) {
    auto [r, v] = predict_grid(member.model, geometry);
    rho_layers.push_back(std::move(r));
    v_layers.push_back(std::move(v));
  }
  out.field = field_from_layers(std::move(rho_layers), std::move(v_layers), config.ci_level, config.ci_method);
  return out;
}

}  // namespace spidl
