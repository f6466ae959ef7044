#include "spidl/vae.hpp"

#include "spidl/adam.hpp"
#include "spidl/alpha_spidl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace spidl {

void VaeShape::validate() const {
  if (latent < 1) throw ConfigError("latent dimension must be >= 1");
  if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("encoder and decoder depth must be >= 1");
  if (encoder_width < 1 || decoder_width < 1) throw ConfigError("layer widths must be >= 1");
  if (!(b_low_rho > 0.0) || !(b_low_v > 0.0)) throw ConfigError("sigma lower bounds must be positive");
}

VaeChannel VaeChannel::create(const VaeShape& shape, double b_low, std::uint64_t seed) {
  shape.validate();
  std::vector<int> enc{2};
  enc.insert(enc.end(), static_cast<std::size_t>(shape.encoder_layers), shape.encoder_width);
  std::vector<int> dec{shape.latent};
  dec.insert(dec.end(), static_cast<std::size_t>(shape.decoder_layers), shape.decoder_width);
  dec.push_back(1);
  VaeChannel c;
  c.trunk = Network::glorot(enc, Activation::Tanh, Activation::Tanh, seed);
  c.mu_head = Network::glorot({shape.encoder_width, shape.latent}, Activation::Identity, Activation::Identity, seed + 1);
  c.sigma_head = Network::glorot({shape.encoder_width, shape.latent}, Activation::Sigmoid, Activation::Sigmoid, seed + 2);
  c.decoder = Network::glorot(dec, Activation::Tanh, Activation::Identity, seed + 3);
  c.b_low = b_low;
  return c;
}

Eigen::Index VaeChannel::parameter_count() const {
  return trunk.parameter_count() + mu_head.parameter_count() + sigma_head.parameter_count() +
         decoder.parameter_count();
}

VectorXd VaeChannel::flatten() const {
  VectorXd p(parameter_count());
  p << trunk.flatten(), mu_head.flatten(), sigma_head.flatten(), decoder.flatten();
  return p;
}

void VaeChannel::assign(const VectorXd& p) {
  if (p.size() != parameter_count()) throw ShapeError("parameter vector length mismatch");
  Eigen::Index o = 0;
  for (Network* n : {&trunk, &mu_head, &sigma_head, &decoder}) {
    n->assign(p.segment(o, n->parameter_count()));
    o += n->parameter_count();
  }
}

DualVae DualVae::create(const VaeShape& shape, std::uint64_t seed, const NormalizationSpec& norm) {
  return {VaeChannel::create(shape, shape.b_low_rho, seed), VaeChannel::create(shape, shape.b_low_v, seed + 100),
          norm};
}

NetworkBundle DualVae::bundle() const {
  NetworkBundle b;
  for (auto [name, ch] : {std::pair{"density", &density}, std::pair{"speed", &speed}}) {
    const std::string p = std::string("vae/") + name + "/";
    b.emplace(p + "trunk", ch->trunk);
    b.emplace(p + "mu", ch->mu_head);
    b.emplace(p + "sigma", ch->sigma_head);
    b.emplace(p + "decoder", ch->decoder);
  }
  return b;
}

DualVae DualVae::from_bundle(const NetworkBundle& b, double b_low_rho, double b_low_v, const NormalizationSpec& norm) {
  auto get = [&](const std::string& key) -> const Network& {
    auto it = b.find(key);
    if (it == b.end()) throw DataError("checkpoint lacks network " + key);
    return it->second;
  };
  DualVae v;
  v.norm = norm;
  for (auto [name, ch, low] : {std::tuple{"density", &v.density, b_low_rho}, std::tuple{"speed", &v.speed, b_low_v}}) {
    const std::string p = std::string("vae/") + name + "/";
    ch->trunk = get(p + "trunk");
    ch->mu_head = get(p + "mu");
    ch->sigma_head = get(p + "sigma");
    ch->decoder = get(p + "decoder");
    ch->b_low = low;
    if (ch->decoder.inputs() != ch->mu_head.outputs() || ch->mu_head.inputs() != ch->trunk.outputs()) {
      throw ShapeError("checkpoint networks for " + std::string(name) + " do not connect");
    }
  }
  return v;
}

namespace {

// Forward state of one channel, kept for the reverse pass. With l > 0 every
// point carries l latent draws laid out point-major (column i*l + k).
struct ChannelPass {
  MlpTape<double> trunk, mu, sigma, dec;
  MatrixXd mu_z, sigma_z, delta, y;
  int l = 0;
};

ChannelPass forward_channel(const VaeChannel& ch, const MatrixXd& X, const MatrixXd* delta, int l) {
  ChannelPass p;
  p.l = l;
  const MatrixXd h = ch.trunk.forward_jet(X, {}, &p.trunk).value;
  p.mu_z = ch.mu_head.forward_jet(h, {}, &p.mu).value;
  p.sigma_z = ch.sigma_head.forward_jet(h, {}, &p.sigma).value.array() + ch.b_low;
  MatrixXd z;
  if (l == 0) {
    z = p.mu_z;
  } else {
    p.delta = *delta;
    const Eigen::Index n = X.cols();
    z.resize(p.mu_z.rows(), n * l);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < l; ++k) {
        const Eigen::Index c = i * l + k;
        z.col(c) = p.mu_z.col(i) + p.delta.col(c).cwiseProduct(p.sigma_z.col(i));
      }
    }
  }
  p.y = ch.decoder.forward_jet(z, {}, &p.dec).value;
  return p;
}

VectorXd backward_channel(const VaeChannel& ch, const ChannelPass& p, const MatrixXd& g_y, MatrixXd g_mu,
                          MatrixXd g_sigma) {
  const MlpGradient<double> gd = ch.decoder.backward(p.dec, g_y);
  if (p.l == 0) {
    g_mu += gd.input;
  } else {
    const Eigen::Index n = p.mu_z.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < p.l; ++k) {
        const Eigen::Index c = i * p.l + k;
        g_mu.col(i) += gd.input.col(c);
        g_sigma.col(i) += gd.input.col(c).cwiseProduct(p.delta.col(c));
      }
    }
  }
  const MlpGradient<double> gs = ch.sigma_head.backward(p.sigma, g_sigma);
  const MlpGradient<double> gm = ch.mu_head.backward(p.mu, g_mu);
  const MlpGradient<double> gt = ch.trunk.backward(p.trunk, gs.input + gm.input);
  VectorXd out(ch.parameter_count());
  out << gt.params, gm.params, gs.params, gd.params;
  return out;
}

MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd d(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) d(r, c) = z(rng);
  }
  return d;
}

// Per-point KL against the standard normal and its moment gradients (scaled by 1/N).
double kl_with_grad(const MatrixXd& mu, const MatrixXd& sigma, MatrixXd* g_mu, MatrixXd* g_sigma) {
  const auto n = static_cast<double>(mu.cols());
  const Eigen::ArrayXXd s2 = sigma.array().square();
  const double kl = -0.5 * (s2.log() - mu.array().square() - s2 + 1.0).sum() / n;
  if (g_mu) *g_mu = mu / n;
  if (g_sigma) *g_sigma = ((sigma.array() - sigma.array().inverse()) / n).matrix();
  return kl;
}

}  // namespace

LatentMoments encode(const DualVae& vae, const MatrixXd& X, Channel channel) {
  const VaeChannel& ch = vae.channel(channel);
  const MatrixXd h = ch.trunk.forward(X);
  return {ch.mu_head.forward(h), (ch.sigma_head.forward(h).array() + ch.b_low).matrix()};
}

MatrixXd reparameterize(const LatentMoments& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return reparameterize(m, standard_normal(m.mu.rows(), m.mu.cols(), rng));
}

MatrixXd reparameterize(const LatentMoments& m, const MatrixXd& delta) {
  if (delta.rows() != m.mu.rows() || delta.cols() != m.mu.cols()) throw ShapeError("noise shape differs from moments");
  return m.mu + delta.cwiseProduct(m.sigma);
}

MatrixXd decode(const DualVae& vae, const MatrixXd& z, Channel channel) {
  const VaeChannel& ch = vae.channel(channel);
  if (z.rows() != ch.latent()) throw ShapeError("latent vector has wrong dimension");
  return ch.decoder.forward(z);
}

ArrayXd estimate_density(const DualVae& vae, const MatrixXd& X) {
  return decode(vae, encode(vae, X, Channel::Density).mu, Channel::Density).row(0).transpose().array() *
         vae.norm.rho_scale;
}

SpeedSampleSet estimate_speed_samples(const DualVae& vae, const MatrixXd& X, int l, std::uint64_t seed) {
  if (l < 2) throw ConfigError("speed sampling needs l >= 2");
  const VaeChannel& ch = vae.speed;
  const LatentMoments m = encode(vae, X, Channel::Speed);
  std::mt19937_64 rng(seed);
  const Eigen::Index n = X.cols();
  const MatrixXd delta = standard_normal(m.mu.rows(), n * l, rng);
  MatrixXd z(m.mu.rows(), n * l);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < l; ++k) z.col(i * l + k) = m.mu.col(i) + delta.col(i * l + k).cwiseProduct(m.sigma.col(i));
  }
  const MatrixXd y = ch.decoder.forward(z);
  SpeedSampleSet s;
  s.v = Eigen::Map<const MatrixXd>(y.data(), l, n) * vae.norm.v_scale;
  return s;
}

double gaussian_kl(const LatentMoments& m) { return kl_with_grad(m.mu, m.sigma, nullptr, nullptr); }

double gaussian_kl_monte_carlo(const LatentMoments& m, int draws, std::uint64_t seed) {
  if (draws < 1) throw ConfigError("draw count must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.mu.cols(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < draws; ++k) {
      double log_ratio = 0.0;
      for (Eigen::Index d = 0; d < m.mu.rows(); ++d) {
        const double e = z(rng);
        const double x = m.mu(d, i) + m.sigma(d, i) * e;
        // log q(x) - log p(x); the 2*pi terms cancel.
        log_ratio += -std::log(m.sigma(d, i)) - 0.5 * e * e + 0.5 * x * x;
      }
      acc += log_ratio;
    }
    total += acc / draws;
  }
  return total / static_cast<double>(m.mu.cols());
}

VaeDataTerms vae_data_loss(const DualVae& vae, const MatrixXd& X, const ArrayXd& target, Channel channel,
                           std::uint64_t seed, double kl_weight, VectorXd* grad) {
  const Eigen::Index n = X.cols();
  if (n == 0) throw DataError("empty observation set");
  if (target.size() != n) throw ShapeError("targets and inputs differ in length");
  const VaeChannel& ch = vae.channel(channel);
  MatrixXd delta;
  int l = 0;
  if (channel == Channel::Speed) {
    std::mt19937_64 rng(seed);
    delta = standard_normal(ch.latent(), n, rng);
    l = 1;
  }
  const ChannelPass p = forward_channel(ch, X, l ? &delta : nullptr, l);
  const ArrayXd err = p.y.row(0).transpose().array() - target;
  VaeDataTerms t;
  t.mse = err.square().mean();
  MatrixXd g_mu = MatrixXd::Zero(p.mu_z.rows(), n), g_sigma = MatrixXd::Zero(p.mu_z.rows(), n);
  t.kl = kl_with_grad(p.mu_z, p.sigma_z, &g_mu, &g_sigma);
  t.total = t.mse + kl_weight * t.kl;
  if (grad) {
    g_mu *= kl_weight;
    g_sigma *= kl_weight;
    const MatrixXd g_y = (2.0 / static_cast<double>(n)) * err.matrix().transpose();
    *grad = backward_channel(ch, p, g_y, g_mu, g_sigma);
  }
  return t;
}

namespace {

constexpr double kEdge = 1e-4;      // fraction of v_max kept clear of the support ends
constexpr double kPenalty = 100.0;  // weight of the squared out-of-range excursion

}  // namespace

DistributionLossTerms physics_distribution_loss(const SpeedSampleSet& samples, const ArrayXd& densities,
                                                const BetaProcess& process, double entropy_weight, MatrixXd* grad) {
  const Eigen::Index n = samples.points();
  const Eigen::Index l = samples.draws();
  if (n == 0) throw DataError("empty sample set");
  if (l < 2) throw ConfigError("distribution loss needs at least two draws per point");
  if (densities.size() != n) throw ShapeError("densities and sample sets differ in length");
  const double vmax = process.v_max;
  const double lo = kEdge * vmax, hi = (1.0 - kEdge) * vmax;
  if (((samples.v.array() < 0.0) || (samples.v.array() > vmax)).all()) {
    throw NumericalError("every speed sample lies outside [0, v_max]");
  }
  if (grad) grad->setZero(l, n);

  DistributionLossTerms t;
  const double inv = 1.0 / static_cast<double>(n * l);
  for (Eigen::Index i = 0; i < n; ++i) {
    const BetaShapes s = beta_shapes(process, std::clamp(densities(i), 0.0, process.rho_max));
    const auto col = samples.v.col(i).array();
    const double mean = col.mean();
    const double var = (col - mean).square().sum() / static_cast<double>(l - 1);
    const double floor = 1e-12 * vmax * vmax;
    t.entropy += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * (var + floor));
    for (Eigen::Index k = 0; k < l; ++k) {
      const double v = samples.v(k, i);
      const double c = std::clamp(v, lo, hi);
      t.nll -= beta_log_pdf(s, vmax, c) * inv;
      if (c != v) {
        ++t.clipped;
        const double e = (v - c) / vmax;
        t.penalty += kPenalty * e * e * inv;
        if (grad) (*grad)(k, i) += 2.0 * kPenalty * e / vmax * inv;
      } else if (grad) {
        (*grad)(k, i) -= beta_log_pdf_dv(s, vmax, v) * inv;
      }
      if (grad) {
        (*grad)(k, i) -= entropy_weight * (v - mean) / (static_cast<double>(l - 1) * (var + floor)) /
                         static_cast<double>(n);
      }
    }
  }
  t.entropy /= static_cast<double>(n);
  t.total = t.nll - entropy_weight * t.entropy + t.penalty;
  return t;
}

DistributionLossTerms speed_physics_loss(const DualVae& vae, const MatrixXd& Xc, const BetaProcess& process, int l,
                                         std::uint64_t seed, double entropy_weight, VectorXd* grad) {
  if (l < 2) throw ConfigError("speed sampling needs l >= 2");
  // Densities enter the process as constants.
  const ArrayXd rho_c = estimate_density(vae, Xc).cwiseMax(0.0).cwiseMin(process.rho_max);
  std::mt19937_64 rng(seed);
  const MatrixXd delta = standard_normal(vae.speed.latent(), Xc.cols() * l, rng);
  const ChannelPass p = forward_channel(vae.speed, Xc, &delta, l);
  SpeedSampleSet s;
  s.v = Eigen::Map<const MatrixXd>(p.y.data(), l, Xc.cols()) * vae.norm.v_scale;
  MatrixXd gs;
  const DistributionLossTerms d = physics_distribution_loss(s, rho_c, process, entropy_weight, grad ? &gs : nullptr);
  if (grad) {
    const MatrixXd g_y = Eigen::Map<const MatrixXd>(gs.data(), 1, gs.size()) * vae.norm.v_scale;
    const MatrixXd zero = MatrixXd::Zero(vae.speed.latent(), Xc.cols());
    *grad = backward_channel(vae.speed, p, g_y, zero, zero);
  }
  return d;
}

double histogram_kl(const ArrayXd& p_counts, const ArrayXd& q_mass, double epsilon) {
  if (p_counts.size() != q_mass.size() || p_counts.size() == 0) throw ShapeError("histograms differ in length");
  const double total = p_counts.sum();
  if (!(total > 0.0)) throw NumericalError("empty histogram");
  const auto b = static_cast<double>(p_counts.size());
  const ArrayXd p = (p_counts / total + epsilon) / (1.0 + b * epsilon);
  const ArrayXd q = (q_mass / q_mass.sum() + epsilon) / (1.0 + b * epsilon);
  return (p * (p / q).log()).sum();
}

double binned_kl(const SpeedSampleSet& samples, const ArrayXd& densities, const BetaProcess& process, int bins,
                 double epsilon) {
  if (bins < 2) throw ConfigError("binned KL needs at least two bins");
  const Eigen::Index n = samples.points();
  if (n == 0) throw DataError("empty sample set");
  const double vmax = process.v_max;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const BetaShapes s = beta_shapes(process, std::clamp(densities(i), 0.0, process.rho_max));
    ArrayXd counts = ArrayXd::Zero(bins), mass(bins);
    for (Eigen::Index k = 0; k < samples.draws(); ++k) {
      const double u = std::clamp(samples.v(k, i) / vmax, 0.0, 1.0);
      counts(std::min<Eigen::Index>(static_cast<Eigen::Index>(u * bins), bins - 1)) += 1.0;
    }
    for (int b = 0; b < bins; ++b) mass(b) = beta_interval_mass(s, vmax, vmax * b / bins, vmax * (b + 1) / bins);
    total += histogram_kl(counts, mass, epsilon);
  }
  return total / static_cast<double>(n);
}

void BetaLossWeights::validate() const {
  if (!(kappa1 >= 0.0) || !(kappa2 >= 0.0) || !(kappa3 >= 0.0)) throw ConfigError("kappa weights must be non-negative");
}

namespace {

std::vector<Eigen::Index> draw(std::mt19937_64& rng, Eigen::Index n, int batch) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

MatrixXd columns(const MatrixXd& M, const std::vector<Eigen::Index>& idx) {
  MatrixXd out(M.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(idx[j]);
  return out;
}

ArrayXd entries(const ArrayXd& a, const std::vector<Eigen::Index>& idx) {
  ArrayXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j)) = a(idx[j]);
  return out;
}

struct StepTerms {
  double data_rho = 0.0, data_v = 0.0, physics = 0.0;
};

// One evaluation of the combined loss. Gradients are returned per channel.
StepTerms combined_loss(const DualVae& vae, const MatrixXd& Xo, const ArrayXd& rho_n, const ArrayXd& v_n,
                        const MatrixXd& Xc, const BetaProcess& process, const BetaLossWeights& w, double kappa3,
                        const BetaTrainConfig& cfg, std::mt19937_64& rng, VectorXd* g_rho, VectorXd* g_v) {
  StepTerms t;
  VectorXd gr, gv, gp;
  const auto seed_v = rng();
  t.data_rho = vae_data_loss(vae, Xo, rho_n, Channel::Density, 0, cfg.density_kl ? cfg.kl_weight : 0.0,
                             g_rho ? &gr : nullptr).total;
  t.data_v = vae_data_loss(vae, Xo, v_n, Channel::Speed, seed_v, cfg.kl_weight, g_v ? &gv : nullptr).total;

  if (kappa3 > 0.0) {
    t.physics = speed_physics_loss(vae, Xc, process, cfg.samples, rng(), cfg.entropy_weight, g_v ? &gp : nullptr).total;
    if (g_v) gp *= kappa3;
  }
  if (g_rho) *g_rho = w.kappa1 * gr;
  if (g_v) {
    *g_v = w.kappa2 * gv;
    if (gp.size()) *g_v += gp;
  }
  return t;
}

}  // namespace

BetaResult train_beta_spidl(const ObservationSet& obs, const CollocationSet& colloc, const BetaProcess& process,
                            const BetaLossWeights& weights, const BetaTrainConfig& config, std::uint64_t seed,
                            const NormalizationSpec& norm, const GridGeometry& geometry) {
  weights.validate();
  config.shape.validate();
  if (obs.size() == 0) throw DataError("empty observation set");
  if (colloc.size() == 0) throw DataError("empty collocation set");
  if (config.samples < 2) throw ConfigError("speed sampling needs l >= 2");
  if (!(process.v_max > 0.0)) throw ConfigError("Beta process is not fitted");

  BetaResult out;
  out.model = DualVae::create(config.shape, seed, norm);
  const MatrixXd Xo = normalized_inputs(obs.x, obs.t, norm);
  const ArrayXd rho_n = obs.rho / norm.rho_scale;
  const ArrayXd v_n = obs.v / norm.v_scale;
  const MatrixXd Xc = normalized_inputs(colloc.x, colloc.t, norm);
  const MatrixXd Xc_eval = Xc.leftCols(std::min<Eigen::Index>(Xc.cols(), 2000));

  auto evaluate = [&](const DualVae& m) {
    std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
    const StepTerms t = combined_loss(m, Xo, rho_n, v_n, Xc_eval, process, weights, weights.kappa3, config, rng,
                                      nullptr, nullptr);
    return weights.kappa1 * t.data_rho + weights.kappa2 * t.data_v + weights.kappa3 * t.physics;
  };
  out.initial_loss = evaluate(out.model);

  std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
  Adam<double> opt_rho(config.learning_rate), opt_v(config.learning_rate);
  VectorXd p_rho = out.model.density.flatten(), p_v = out.model.speed.flatten();
  const double warm = std::max(1.0, config.warmup_fraction * config.epochs);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  out.trace.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    MatrixXd xo = Xo, xc = Xc;
    ArrayXd ro = rho_n, vo = v_n;
    if (config.obs_batch > 0 && config.obs_batch < Xo.cols()) {
      const auto idx = draw(rng, Xo.cols(), config.obs_batch);
      xo = columns(Xo, idx);
      ro = entries(rho_n, idx);
      vo = entries(v_n, idx);
    }
    if (config.colloc_batch > 0 && config.colloc_batch < Xc.cols()) xc = columns(Xc, draw(rng, Xc.cols(), config.colloc_batch));
    const double kappa3 = weights.kappa3 * std::min(1.0, static_cast<double>(epoch) / warm);

    VectorXd g_rho, g_v;
    const StepTerms t = combined_loss(out.model, xo, ro, vo, xc, process, weights, kappa3, config, rng, &g_rho, &g_v);
    const double data = weights.kappa1 * t.data_rho + weights.kappa2 * t.data_v;
    const double total = data + kappa3 * t.physics;
    if (!std::isfinite(total) || !g_rho.allFinite() || !g_v.allFinite()) {
      throw TrainingError("B-SPIDL training diverged at epoch " + std::to_string(epoch), out.trace);
    }
    if (total < best - config.min_delta) {
      best = total;
      since_best = 0;
    } else {
      ++since_best;
    }
    out.trace.push_back({data, kappa3 * t.physics, total, best});

    opt_rho.step(p_rho, g_rho);
    opt_v.step(p_v, g_v);
    out.model.density.assign(p_rho);
    out.model.speed.assign(p_v);
    // Patience only counts once the physics weight has fully ramped in.
    if (epoch >= warm && since_best >= config.patience) break;
  }
  out.final_loss = evaluate(out.model);
  out.field = predict_beta_field(out.model, geometry, config.samples, seed + 7);
  return out;
}

EstimateField predict_beta_field(const DualVae& vae, const GridGeometry& g, int l, std::uint64_t seed,
                                 double ci_level) {
  if (l < 2) throw ConfigError("speed sampling needs l >= 2");
  EstimateField f;
  f.ci_level = ci_level;
  f.ci_method = CiMethod::Empirical;
  f.rho_mean.resize(g.nx, g.nt);
  f.v_layers.assign(static_cast<std::size_t>(l), MatrixXd(g.nx, g.nt));
  MatrixXd X(2, g.nt);
  for (Eigen::Index i = 0; i < g.nx; ++i) {
    for (Eigen::Index k = 0; k < g.nt; ++k) X.col(k) << vae.norm.norm_x(g.x_at(i)), vae.norm.norm_t(g.t_at(k));
    f.rho_mean.row(i) = estimate_density(vae, X).matrix().transpose();
    const SpeedSampleSet s = estimate_speed_samples(vae, X, l, seed + static_cast<std::uint64_t>(i));
    for (int j = 0; j < l; ++j) f.v_layers[static_cast<std::size_t>(j)].row(i) = s.v.row(j);
  }
  f.rho_std = MatrixXd::Zero(g.nx, g.nt);
  f.rho_lo = f.rho_mean;
  f.rho_hi = f.rho_mean;
  summarize_layers(f.v_layers, ci_level, CiMethod::Empirical, f.v_mean, f.v_std, f.v_lo, f.v_hi);
  return f;
}

void export_speed_samples(const std::filesystem::path& path, const ArrayXd& x, const ArrayXd& t, const ArrayXd& rho,
                          const SpeedSampleSet& samples) {
  if (x.size() != samples.points() || t.size() != x.size() || rho.size() != x.size()) {
    throw ShapeError("sample dump columns differ in length");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "x,t,rho_hat,sample_index,v_sample\n";
  out.precision(10);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (Eigen::Index k = 0; k < samples.draws(); ++k) {
      out << x(i) << ',' << t(i) << ',' << rho(i) << ',' << k << ',' << samples.v(k, i) << '\n';
    }
  }
}

}  // namespace spidl
