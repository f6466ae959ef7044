#include "spidl/alpha_spidl.hpp"
#include "spidl/vae.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace spidl;

namespace {

NormalizationSpec test_norm() {
  NormalizationSpec n;
  n.x_scale = 600.0;
  n.t_scale = 900.0;
  n.rho_scale = 0.4;
  n.v_scale = 25.0;
  return n;
}

VaeShape small_shape() {
  VaeShape s;
  s.latent = 3;
  s.encoder_layers = 2;
  s.encoder_width = 6;
  s.decoder_layers = 2;
  s.decoder_width = 5;
  return s;
}

// v_f = v_max and rho = rho_cr put the mean at v_max / 2; the variance curve
// peaks at v_max^2 / 12 there, which makes g(. | rho) uniform.
BetaProcess uniform_at(double rho, double v_max) {
  BetaProcess p;
  p.v_max = v_max;
  p.rho_max = 0.5;
  p.mean_curve = {v_max, rho, 2.0};
  p.var_curve.mu_ln = std::log(rho);
  p.var_curve.sigma_ln = 0.5;
  p.var_curve.amplitude = v_max * v_max / 12.0 * rho * 0.5 * std::sqrt(2.0 * std::numbers::pi);
  return p;
}

BetaProcess realistic_process() {
  BetaProcess p;
  p.v_max = 27.0;
  p.rho_max = 0.45;
  p.mean_curve = {24.0, 0.18, 2.5};
  p.var_curve.mu_ln = std::log(0.12);
  p.var_curve.sigma_ln = 0.6;
  p.var_curve.amplitude = 0.8;
  return p;
}

MatrixXd random_inputs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd X(2, n);
  for (int i = 0; i < n; ++i) X.col(i) << u(rng), u(rng);
  return X;
}

SpeedSampleSet samples_from(const BetaProcess& p, const std::vector<double>& rhos, int l, std::uint64_t seed) {
  SpeedSampleSet s;
  s.v.resize(l, static_cast<Eigen::Index>(rhos.size()));
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    const auto draws = beta_sample(p, rhos[i], l, seed + i);
    for (int k = 0; k < l; ++k) s.v(k, static_cast<Eigen::Index>(i)) = draws[static_cast<std::size_t>(k)];
  }
  return s;
}

}  // namespace

TEST(VaeForward, ZeroParametersGivePriorLikeMoments) {
  DualVae vae = DualVae::create(small_shape(), 3, test_norm());
  vae.speed.assign(VectorXd::Zero(vae.speed.parameter_count()));
  const MatrixXd X = random_inputs(7, 1);
  const LatentMoments m = encode(vae, X, Channel::Speed);
  EXPECT_TRUE(m.mu.isZero(0.0));
  EXPECT_TRUE((m.sigma.array() - (0.5 + vae.speed.b_low)).abs().maxCoeff() < 1e-15);
  EXPECT_TRUE(decode(vae, reparameterize(m, 5), Channel::Speed).isZero(0.0));
}

TEST(VaeForward, HandBuiltChannel) {
  VaeShape s;
  s.latent = 1;
  s.encoder_layers = 1;
  s.encoder_width = 1;
  s.decoder_layers = 1;
  s.decoder_width = 1;
  DualVae vae = DualVae::create(s, 1, test_norm());
  // trunk: w=(0.5,-0.25), b=0.1; mu: 2h-0.3; sigma: sigmoid(h+0.2); decoder: 1.5 tanh(0.8z+0.05)-0.1
  VectorXd p(vae.density.parameter_count());
  p << 0.5, -0.25, 0.1, 2.0, -0.3, 1.0, 0.2, 0.8, 0.05, 1.5, -0.1;
  vae.density.assign(p);
  MatrixXd X(2, 1);
  X << 0.6, 0.2;
  const double h = std::tanh(0.5 * 0.6 - 0.25 * 0.2 + 0.1);
  const double mu = 2.0 * h - 0.3;
  const double sigma = 1.0 / (1.0 + std::exp(-(h + 0.2))) + s.b_low_rho;
  const LatentMoments m = encode(vae, X, Channel::Density);
  EXPECT_NEAR(m.mu(0, 0), mu, 1e-14);
  EXPECT_NEAR(m.sigma(0, 0), sigma, 1e-14);
  const double y = 1.5 * std::tanh(0.8 * mu + 0.05) - 0.1;
  EXPECT_NEAR(estimate_density(vae, X)(0), y * 0.4, 1e-14);
  MatrixXd delta(1, 1);
  delta << 0.7;
  const double z = mu + 0.7 * sigma;
  EXPECT_NEAR(decode(vae, reparameterize(m, delta), Channel::Density)(0, 0), 1.5 * std::tanh(0.8 * z + 0.05) - 0.1,
              1e-14);
}

TEST(VaeForward, ZeroNoiseGivesMeanLatent) {
  const DualVae vae = DualVae::create(small_shape(), 9, test_norm());
  const LatentMoments m = encode(vae, random_inputs(5, 2), Channel::Speed);
  EXPECT_EQ(reparameterize(m, MatrixXd::Zero(3, 5)), m.mu);
}

TEST(VaeForward, ShapeErrors) {
  const DualVae vae = DualVae::create(small_shape(), 9, test_norm());
  EXPECT_THROW(decode(vae, MatrixXd::Zero(2, 4), Channel::Density), ShapeError);
  const LatentMoments m = encode(vae, random_inputs(5, 2), Channel::Speed);
  EXPECT_THROW(reparameterize(m, MatrixXd::Zero(3, 4)), ShapeError);
  EXPECT_THROW(estimate_speed_samples(vae, random_inputs(5, 2), 1, 0), ConfigError);
  VaeShape bad = small_shape();
  bad.b_low_v = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Reparameterize, MonteCarloMoments) {
  LatentMoments m{MatrixXd::Constant(1, 200000, 0.3), MatrixXd::Constant(1, 200000, 0.7)};
  const MatrixXd z = reparameterize(m, 42);
  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().sum() / (z.size() - 1));
  EXPECT_NEAR(mean, 0.3, 0.01);
  EXPECT_NEAR(sd, 0.7, 0.007);
  EXPECT_EQ(z, reparameterize(m, 42));
}

TEST(GaussianKl, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(gaussian_kl({MatrixXd::Zero(4, 3), MatrixXd::Ones(4, 3)}), 0.0);
  EXPECT_NEAR(gaussian_kl({MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)}), 0.5, 1e-15);
  LatentMoments m{MatrixXd(2, 1), MatrixXd(2, 1)};
  m.mu << 0.4, -1.2;
  m.sigma << 0.5, 1.7;
  double expect = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double s2 = m.sigma(d) * m.sigma(d);
    expect += 0.5 * (s2 + m.mu(d) * m.mu(d) - 1.0 - std::log(s2));
  }
  EXPECT_NEAR(gaussian_kl(m), expect, 1e-14);
  EXPECT_NEAR(gaussian_kl_monte_carlo(m, 200000, 7), expect, 0.02 * expect);
}

TEST(VaeDataLoss, GradientsMatchFiniteDifferences) {
  DualVae vae = DualVae::create(small_shape(), 11, test_norm());
  const MatrixXd X = random_inputs(9, 3);
  const ArrayXd target = ArrayXd::LinSpaced(9, 0.1, 0.9);
  std::mt19937_64 rng(5);
  for (Channel c : {Channel::Density, Channel::Speed}) {
    VectorXd g;
    vae_data_loss(vae, X, target, c, 17, 0.7, &g);
    const VectorXd p0 = vae.channel(c).flatten();
    std::uniform_int_distribution<Eigen::Index> pick(0, p0.size() - 1);
    for (int probe = 0; probe < 30; ++probe) {
      const Eigen::Index j = pick(rng);
      const double h = 1e-6;
      VectorXd p = p0;
      p(j) += h;
      vae.channel(c).assign(p);
      const double up = vae_data_loss(vae, X, target, c, 17, 0.7).total;
      p(j) -= 2 * h;
      vae.channel(c).assign(p);
      const double dn = vae_data_loss(vae, X, target, c, 17, 0.7).total;
      vae.channel(c).assign(p0);
      EXPECT_NEAR(g(j), (up - dn) / (2 * h), 1e-6 + 1e-4 * std::abs(g(j))) << "parameter " << j;
    }
  }
}

TEST(VaeDataLoss, KlTermCanBeDropped) {
  const DualVae vae = DualVae::create(small_shape(), 11, test_norm());
  const MatrixXd X = random_inputs(6, 3);
  const ArrayXd target = ArrayXd::Constant(6, 0.5);
  const VaeDataTerms with = vae_data_loss(vae, X, target, Channel::Density, 0, 1.0);
  const VaeDataTerms without = vae_data_loss(vae, X, target, Channel::Density, 0, 0.0);
  EXPECT_DOUBLE_EQ(with.mse, without.mse);
  EXPECT_GT(with.kl, 0.0);
  EXPECT_DOUBLE_EQ(without.total, without.mse);
  EXPECT_THROW(vae_data_loss(vae, X, ArrayXd::Zero(5), Channel::Density, 0), ShapeError);
}

TEST(DistributionLoss, UniformGivesLogSupport) {
  const double v_max = 30.0;
  const BetaProcess p = uniform_at(0.1, v_max);
  const BetaShapes s = beta_shapes(p, 0.1);
  ASSERT_NEAR(s.alpha, 1.0, 1e-9);
  ASSERT_NEAR(s.beta, 1.0, 1e-9);
  SpeedSampleSet samples;
  samples.v = MatrixXd::Constant(4, 1, v_max / 2);
  const DistributionLossTerms t = physics_distribution_loss(samples, ArrayXd::Constant(1, 0.1), p, 0.0);
  EXPECT_NEAR(t.nll, std::log(v_max), 1e-9);
  EXPECT_EQ(t.clipped, 0);
}

TEST(DistributionLoss, NllOfOwnSamplesApproachesEntropy) {
  const BetaProcess p = realistic_process();
  for (double rho : {0.05, 0.15, 0.3}) {
    const SpeedSampleSet s = samples_from(p, {rho}, 40000, 3);
    const DistributionLossTerms t = physics_distribution_loss(s, ArrayXd::Constant(1, rho), p);
    const double h = beta_entropy(beta_shapes(p, rho), p.v_max);
    EXPECT_NEAR(t.nll, h, 0.02 * std::abs(h) + 0.01) << rho;
    // the Gaussian estimate bounds the true entropy from above
    EXPECT_GE(t.entropy, h - 0.01) << rho;
  }
}

TEST(DistributionLoss, CollapsedSamplesScoreWorse) {
  const BetaProcess p = realistic_process();
  const std::vector<double> rhos{0.08, 0.2};
  const SpeedSampleSet drawn = samples_from(p, rhos, 50, 9);
  SpeedSampleSet collapsed;
  collapsed.v.resize(50, 2);
  for (int i = 0; i < 2; ++i) {
    const BetaShapes s = beta_shapes(p, rhos[static_cast<std::size_t>(i)]);
    collapsed.v.col(i).setConstant(s.mu_hat * p.v_max);
  }
  const ArrayXd d = Eigen::Map<const ArrayXd>(rhos.data(), 2);
  EXPECT_GT(physics_distribution_loss(collapsed, d, p).total, physics_distribution_loss(drawn, d, p).total + 5.0);
}

TEST(DistributionLoss, OutOfRangeSamplesAreClippedAndPenalized) {
  const BetaProcess p = realistic_process();
  SpeedSampleSet s;
  s.v.resize(3, 1);
  s.v << -1.0, 10.0, p.v_max + 2.0;
  const DistributionLossTerms t = physics_distribution_loss(s, ArrayXd::Constant(1, 0.1), p);
  EXPECT_EQ(t.clipped, 2);
  EXPECT_GT(t.penalty, 0.0);
  EXPECT_TRUE(std::isfinite(t.total));
  s.v << -1.0, -2.0, p.v_max + 2.0;
  EXPECT_THROW(physics_distribution_loss(s, ArrayXd::Constant(1, 0.1), p), NumericalError);
  EXPECT_THROW(physics_distribution_loss(s, ArrayXd::Constant(2, 0.1), p), ShapeError);
}

TEST(DistributionLoss, SampleGradientMatchesFiniteDifferences) {
  const BetaProcess p = realistic_process();
  SpeedSampleSet s = samples_from(p, {0.06, 0.17, 0.33}, 6, 21);
  s.v(0, 1) = p.v_max + 0.5;  // exercise the penalty branch
  const ArrayXd d = (ArrayXd(3) << 0.06, 0.17, 0.33).finished();
  MatrixXd g;
  physics_distribution_loss(s, d, p, 0.7, &g);
  for (Eigen::Index i = 0; i < s.v.size(); ++i) {
    const double h = 1e-6;
    SpeedSampleSet a = s, b = s;
    a.v(i) += h;
    b.v(i) -= h;
    const double fd =
        (physics_distribution_loss(a, d, p, 0.7).total - physics_distribution_loss(b, d, p, 0.7).total) / (2 * h);
    EXPECT_NEAR(g(i), fd, 1e-6 + 1e-4 * std::abs(fd)) << i;
  }
}

TEST(BinnedKl, OwnSamplesAreClose) {
  const BetaProcess p = realistic_process();
  const std::vector<double> rhos{0.04, 0.12, 0.25, 0.4};
  const SpeedSampleSet s = samples_from(p, rhos, 10000, 4);
  EXPECT_LT(binned_kl(s, Eigen::Map<const ArrayXd>(rhos.data(), 4), p), 0.02);
}

TEST(BinnedKl, IdenticalHistogramsGiveZero) {
  const ArrayXd counts = (ArrayXd(4) << 1, 5, 3, 1).finished();
  EXPECT_NEAR(histogram_kl(counts, counts / counts.sum()), 0.0, 1e-15);
  EXPECT_GT(histogram_kl(counts, ArrayXd::Constant(4, 0.25)), 0.0);
  EXPECT_THROW(histogram_kl(counts, ArrayXd::Ones(3)), ShapeError);
}

TEST(BinnedKl, ShiftedSamplesAreFar) {
  const BetaProcess p = realistic_process();
  SpeedSampleSet s = samples_from(p, {0.3}, 5000, 4);
  s.v.array() = (s.v.array() + 0.4 * p.v_max).min(p.v_max);
  EXPECT_GT(binned_kl(s, ArrayXd::Constant(1, 0.3), p), 1.0);
}

TEST(SpeedSamples, LayoutAndDeterminism) {
  const DualVae vae = DualVae::create(small_shape(), 2, test_norm());
  const MatrixXd X = random_inputs(4, 8);
  const SpeedSampleSet a = estimate_speed_samples(vae, X, 12, 99);
  EXPECT_EQ(a.draws(), 12);
  EXPECT_EQ(a.points(), 4);
  EXPECT_EQ(a.v, estimate_speed_samples(vae, X, 12, 99).v);
  // draws for a single point agree with decoding its own moments
  const LatentMoments m = encode(vae, X, Channel::Speed);
  EXPECT_GT((a.v.row(0).array() - a.v.row(1).array()).abs().maxCoeff(), 0.0);
  const double lo = a.v.col(2).minCoeff(), hi = a.v.col(2).maxCoeff();
  const double at_mean = decode(vae, m.mu.col(2), Channel::Speed)(0, 0) * test_norm().v_scale;
  EXPECT_LT(lo - 1.0, at_mean);
  EXPECT_GT(hi + 1.0, at_mean);
}

TEST(DualVae, BundleRoundTrip) {
  const DualVae vae = DualVae::create(small_shape(), 5, test_norm());
  const auto dir = std::filesystem::temp_directory_path() / "spidl_vae_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(vae.bundle(), dir / "vae.ckpt");
  const DualVae back = DualVae::from_bundle(load_checkpoint(dir / "vae.ckpt"), vae.density.b_low, vae.speed.b_low,
                                            vae.norm);
  const MatrixXd X = random_inputs(5, 1);
  EXPECT_EQ(estimate_density(back, X).matrix(), estimate_density(vae, X).matrix());
  EXPECT_EQ(estimate_speed_samples(back, X, 4, 1).v, estimate_speed_samples(vae, X, 4, 1).v);
  NetworkBundle partial = vae.bundle();
  partial.erase("vae/speed/decoder");
  EXPECT_THROW(DualVae::from_bundle(partial, 1e-3, 1e-3, vae.norm), DataError);
  std::filesystem::remove_all(dir);
}

TEST(ExportSamples, WritesOneRowPerDraw) {
  SpeedSampleSet s;
  s.v = (MatrixXd(2, 2) << 10, 11, 12, 13).finished();
  const auto path = std::filesystem::temp_directory_path() / "spidl_samples.csv";
  export_speed_samples(path, ArrayXd::LinSpaced(2, 0, 30), ArrayXd::Zero(2), ArrayXd::Constant(2, 0.1), s);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,t,rho_hat,sample_index,v_sample");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
  std::filesystem::remove(path);
}

namespace {

struct TinyProblem {
  TrafficGrid grid;
  ObservationSet obs;
  CollocationSet colloc;
  NormalizationSpec norm;
};

TinyProblem tiny_problem() {
  TinyProblem p;
  p.grid.densities.resize(5, 20);
  p.grid.speeds.resize(5, 20);
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < 20; ++k) {
      const double r = 0.05 + 0.01 * i + 0.004 * k;
      p.grid.densities(i, k) = r;
      p.grid.speeds(i, k) = 24.0 * std::exp(-r / 0.2);
    }
  }
  p.obs = sample_detectors(p.grid, 5, DetectorStrategy::Equispaced);
  p.colloc = sample_collocation(p.grid, 60, 1, CollocationScheme::UniformRandom);
  p.norm = make_normalizer(p.grid, p.obs);
  return p;
}

}  // namespace

TEST(BetaTraining, DataOnlyFitReducesLoss) {
  const TinyProblem p = tiny_problem();
  BetaTrainConfig cfg;
  cfg.shape = small_shape();
  cfg.learning_rate = 5e-3;
  cfg.epochs = 600;
  cfg.samples = 8;
  BetaLossWeights w;
  w.kappa3 = 0.0;
  const BetaResult r = train_beta_spidl(p.obs, p.colloc, realistic_process(), w, cfg, 4, p.norm, p.grid.geometry());
  EXPECT_LT(r.final_loss, 0.2 * r.initial_loss);
  EXPECT_EQ(r.field.nx(), 5);
  EXPECT_EQ(r.field.nt(), 20);
  EXPECT_EQ(r.field.v_layers.size(), 8u);
  EXPECT_TRUE(r.field.rho_std.isZero(0.0));
  EXPECT_TRUE((r.field.v_lo.array() <= r.field.v_hi.array()).all());
  const double mae = (r.field.rho_mean - p.grid.densities).cwiseAbs().mean();
  EXPECT_LT(mae, 0.02);
}

TEST(BetaTraining, PhysicsTermRunsAndIsDeterministic) {
  const TinyProblem p = tiny_problem();
  BetaTrainConfig cfg;
  cfg.shape = small_shape();
  cfg.learning_rate = 2e-3;
  cfg.epochs = 60;
  cfg.samples = 6;
  cfg.colloc_batch = 20;
  const BetaProcess proc = realistic_process();
  const BetaResult a = train_beta_spidl(p.obs, p.colloc, proc, {}, cfg, 8, p.norm, p.grid.geometry());
  const BetaResult b = train_beta_spidl(p.obs, p.colloc, proc, {}, cfg, 8, p.norm, p.grid.geometry());
  EXPECT_EQ(a.field.v_mean, b.field.v_mean);
  ASSERT_EQ(a.trace.size(), 60u);
  EXPECT_DOUBLE_EQ(a.trace.front().physics, 0.0);  // warm-up starts at zero weight
  EXPECT_NE(a.trace.back().physics, 0.0);
}

TEST(BetaTraining, RejectsBadConfig) {
  const TinyProblem p = tiny_problem();
  BetaTrainConfig cfg;
  cfg.shape = small_shape();
  cfg.samples = 1;
  EXPECT_THROW(train_beta_spidl(p.obs, p.colloc, realistic_process(), {}, cfg, 1, p.norm, p.grid.geometry()),
               ConfigError);
  cfg.samples = 4;
  BetaLossWeights w;
  w.kappa1 = -1.0;
  EXPECT_THROW(train_beta_spidl(p.obs, p.colloc, realistic_process(), w, cfg, 1, p.norm, p.grid.geometry()),
               ConfigError);
}

TEST(SpeedPhysicsLoss, ReparameterizedGradientMatchesFiniteDifferences) {
  DualVae vae = DualVae::create(small_shape(), 13, test_norm());
  const MatrixXd Xc = random_inputs(7, 6);
  const BetaProcess proc = realistic_process();
  VectorXd g;
  speed_physics_loss(vae, Xc, proc, 5, 31, 1.0, &g);
  const VectorXd p0 = vae.speed.flatten();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Eigen::Index> pick(0, p0.size() - 1);
  for (int probe = 0; probe < 30; ++probe) {
    const Eigen::Index j = pick(rng);
    const double h = 1e-6;
    VectorXd p = p0;
    p(j) += h;
    vae.speed.assign(p);
    const double up = speed_physics_loss(vae, Xc, proc, 5, 31).total;
    p(j) -= 2 * h;
    vae.speed.assign(p);
    const double dn = speed_physics_loss(vae, Xc, proc, 5, 31).total;
    vae.speed.assign(p0);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(g(j), fd, 1e-5 + 1e-3 * std::abs(fd)) << "parameter " << j;
  }
}

TEST(SpeedSamples, CollapseLimit) {
  VaeShape s = small_shape();
  s.b_low_v = 1e-9;
  DualVae vae = DualVae::create(s, 4, test_norm());
  // drive the spread head to sigmoid(-40)
  VectorXd p = vae.speed.sigma_head.flatten();
  p.setZero();
  p.tail(s.latent).setConstant(-40.0);
  vae.speed.sigma_head.assign(p);
  const SpeedSampleSet smp = estimate_speed_samples(vae, random_inputs(6, 3), 30, 1);
  const double spread = (smp.v.colwise().maxCoeff() - smp.v.colwise().minCoeff()).maxCoeff();
  EXPECT_LT(spread, 1e-3 * 27.0);
}

TEST(GaussianKl, NonNegativeAndZeroOnlyAtPrior) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    LatentMoments m{MatrixXd(3, 2), MatrixXd(3, 2)};
    for (Eigen::Index i = 0; i < 6; ++i) {
      m.mu(i) = u(rng);
      m.sigma(i) = std::exp(u(rng));
    }
    EXPECT_GT(gaussian_kl(m), 0.0);
  }
  LatentMoments near{MatrixXd::Constant(2, 1, 1e-4), MatrixXd::Ones(2, 1)};
  EXPECT_GT(gaussian_kl(near), 0.0);
  EXPECT_LT(gaussian_kl(near), 1e-7);
}

TEST(BetaTraining, PhysicsOffFitsFullObservation) {
  const TinyProblem p = tiny_problem();
  BetaTrainConfig cfg;
  cfg.shape = small_shape();
  cfg.learning_rate = 5e-3;
  cfg.epochs = 3000;
  cfg.samples = 4;
  BetaLossWeights w;
  w.kappa3 = 0.0;
  const BetaResult r = train_beta_spidl(p.obs, p.colloc, realistic_process(), w, cfg, 4, p.norm, p.grid.geometry());
  const MatrixXd X = normalized_inputs(p.obs.x, p.obs.t, p.norm);
  const double mse_rho = vae_data_loss(r.model, X, p.obs.rho / p.norm.rho_scale, Channel::Density, 1).mse;
  const double mse_v = vae_data_loss(r.model, X, p.obs.v / p.norm.v_scale, Channel::Speed, 1).mse;
  EXPECT_LT(mse_rho, 1e-3);
  EXPECT_LT(mse_v, 1e-3);
}

TEST(BetaTraining, PhysicsOnlyDriftsTowardProcess) {
  const TinyProblem p = tiny_problem();
  BetaTrainConfig cfg;
  cfg.shape = small_shape();
  cfg.learning_rate = 3e-3;
  cfg.epochs = 800;
  cfg.samples = 16;
  cfg.warmup_fraction = 0.0;
  BetaLossWeights w;
  w.kappa1 = 0.0;
  w.kappa2 = 0.0;
  w.kappa3 = 1.0;
  const BetaProcess proc = realistic_process();
  const MatrixXd Xc = normalized_inputs(p.colloc.x, p.colloc.t, p.norm);
  const DualVae start = DualVae::create(cfg.shape, 6, p.norm);
  const BetaResult r = train_beta_spidl(p.obs, p.colloc, proc, w, cfg, 6, p.norm, p.grid.geometry());
  auto kl = [&](const DualVae& m) {
    const ArrayXd rho = estimate_density(m, Xc).cwiseMax(0.0).cwiseMin(proc.rho_max);
    return binned_kl(estimate_speed_samples(m, Xc, 2000, 9), rho, proc);
  };
  const double before = kl(start), after = kl(r.model);
  EXPECT_LT(after, 0.5 * before) << before << " -> " << after;
}
