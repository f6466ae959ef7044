#pragma once

#include "spidl/checkpoint.hpp"
#include "spidl/estimate_field.hpp"
#include "spidl/grid.hpp"
#include "spidl/mlp.hpp"
#include "spidl/stochastic_fd.hpp"
#include "spidl/training.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace spidl {

enum class Channel { Density, Speed };

struct VaeShape {
  int latent = 32;
  int encoder_layers = 4;
  int encoder_width = 32;
  int decoder_layers = 4;
  int decoder_width = 32;
  double b_low_rho = 1e-3;
  double b_low_v = 1e-3;

  void validate() const;
};

/// One encoder-decoder pair. The encoder trunk feeds a linear mean head and a
/// sigmoid spread head; the decoder maps a latent vector to one normalized state.
struct VaeChannel {
  Network trunk, mu_head, sigma_head, decoder;
  double b_low = 1e-3;

  static VaeChannel create(const VaeShape& shape, double b_low, std::uint64_t seed);
  int latent() const { return static_cast<int>(mu_head.outputs()); }
  Eigen::Index parameter_count() const;
  VectorXd flatten() const;
  void assign(const VectorXd& p);
};

struct DualVae {
  VaeChannel density, speed;
  NormalizationSpec norm;

  static DualVae create(const VaeShape& shape, std::uint64_t seed, const NormalizationSpec& norm);
  const VaeChannel& channel(Channel c) const { return c == Channel::Density ? density : speed; }
  VaeChannel& channel(Channel c) { return c == Channel::Density ? density : speed; }

  /// Network bundle for checkpoints. Lower bounds and normalization travel in
  /// the run metadata.
  NetworkBundle bundle() const;
  static DualVae from_bundle(const NetworkBundle& b, double b_low_rho, double b_low_v, const NormalizationSpec& norm);
};

/// Latent moments, D x N.
struct LatentMoments {
  MatrixXd mu, sigma;
};

LatentMoments encode(const DualVae& vae, const MatrixXd& X, Channel channel);

/// z = mu + delta * sigma with standard-normal delta drawn from `seed`.
MatrixXd reparameterize(const LatentMoments& m, std::uint64_t seed);
/// Same with caller-supplied noise (delta = 0 gives the mean latent).
MatrixXd reparameterize(const LatentMoments& m, const MatrixXd& delta);

/// Normalized state, 1 x N.
MatrixXd decode(const DualVae& vae, const MatrixXd& z, Channel channel);

/// Mean-latent density path, veh/m.
ArrayXd estimate_density(const DualVae& vae, const MatrixXd& X);

/// l decoded draws per point, m/s. Row k holds draw k for every point.
struct SpeedSampleSet {
  MatrixXd v;  // l x N
  Eigen::Index draws() const { return v.rows(); }
  Eigen::Index points() const { return v.cols(); }
};
SpeedSampleSet estimate_speed_samples(const DualVae& vae, const MatrixXd& X, int l, std::uint64_t seed);

/// Closed-form KL of N(mu, diag sigma^2) against N(0, I), averaged over points.
double gaussian_kl(const LatentMoments& m);
/// Monte-Carlo estimate of the same quantity from `draws` samples per point.
double gaussian_kl_monte_carlo(const LatentMoments& m, int draws, std::uint64_t seed);

struct VaeDataTerms {
  double mse = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// Reconstruction MSE plus weighted latent KL in normalized units. The density channel
/// uses the mean latent; the speed channel draws one latent per point. `grad`
/// receives the parameter gradient of `total` for that channel.
VaeDataTerms vae_data_loss(const DualVae& vae, const MatrixXd& X, const ArrayXd& target_norm, Channel channel,
                           std::uint64_t seed, double kl_weight = 1.0, VectorXd* grad = nullptr);

struct DistributionLossTerms {
  double nll = 0.0;       // mean negative log-density under the Beta process
  double entropy = 0.0;   // mean Gaussian entropy estimate of the sample sets
  double penalty = 0.0;   // out-of-range penalty
  double total = 0.0;     // nll - entropy_weight * entropy + penalty
  Eigen::Index clipped = 0;
};

/// Training form of the distributional physics loss. `densities` are clipped to
/// the process domain. When `grad` is non-null it receives d total / d sample (l x N).
DistributionLossTerms physics_distribution_loss(const SpeedSampleSet& samples, const ArrayXd& densities,
                                                const BetaProcess& process, double entropy_weight = 1.0,
                                                MatrixXd* grad = nullptr);

/// Training physics loss of the speed channel at normalized collocation inputs:
/// l reparameterized draws per point scored against the process at the current
/// (stop-gradient) density estimate. `grad` receives the speed-channel parameter gradient.
DistributionLossTerms speed_physics_loss(const DualVae& vae, const MatrixXd& Xc, const BetaProcess& process, int l,
                                         std::uint64_t seed, double entropy_weight = 1.0, VectorXd* grad = nullptr);

/// Evaluation form: histogram KL against Beta bin masses with epsilon smoothing,
/// averaged over points.
double binned_kl(const SpeedSampleSet& samples, const ArrayXd& densities, const BetaProcess& process, int bins = 20,
                 double epsilon = 1e-6);
/// KL between two histograms after the same smoothing.
double histogram_kl(const ArrayXd& p_counts, const ArrayXd& q_mass, double epsilon = 1e-6);

struct BetaLossWeights {
  double kappa1 = 1.0, kappa2 = 1.0, kappa3 = 0.1;
  void validate() const;
};

struct BetaTrainConfig {
  VaeShape shape{};
  double learning_rate = 5e-4;
  int epochs = 20000;
  int patience = 2000;
  double min_delta = 1e-6;
  int obs_batch = 0;      // 0 = full batch
  int colloc_batch = 0;   // 0 = full batch
  int samples = 50;       // l, draws per collocation point and per field cell
  double warmup_fraction = 0.1;
  double entropy_weight = 1.0;
  double kl_weight = 1e-3;  // weight of the latent KL in both data terms
  bool density_kl = true;
};

struct BetaResult {
  DualVae model;
  std::vector<TraceEntry> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  EstimateField field;
};

BetaResult train_beta_spidl(const ObservationSet& obs, const CollocationSet& colloc, const BetaProcess& process,
                            const BetaLossWeights& weights, const BetaTrainConfig& config, std::uint64_t seed,
                            const NormalizationSpec& norm, const GridGeometry& geometry);

/// Field from the mean density path and l speed draws per cell (empirical CI).
EstimateField predict_beta_field(const DualVae& vae, const GridGeometry& geometry, int l, std::uint64_t seed,
                                 double ci_level = 0.95);

/// Per-point sample dump `x,t,rho_hat,sample_index,v_sample`.
void export_speed_samples(const std::filesystem::path& path, const ArrayXd& x, const ArrayXd& t, const ArrayXd& rho,
                          const SpeedSampleSet& samples);

}  // namespace spidl
