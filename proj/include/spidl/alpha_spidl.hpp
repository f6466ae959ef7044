#pragma once

#include "spidl/checkpoint.hpp"
#include "spidl/estimate_field.hpp"
#include "spidl/grid.hpp"
#include "spidl/mlp.hpp"
#include "spidl/percentile_fd.hpp"
#include "spidl/physics_loss.hpp"
#include "spidl/training.hpp"

#include <vector>

namespace spidl {

/// Estimator network mapping normalized (x, t) to normalized (rho, v). Either
/// one shared trunk with a two-channel head or twin single-output networks.
class PinnModel {
 public:
  PinnModel() = default;
  PinnModel(std::vector<Network> nets, NormalizationSpec norm);

  /// `hidden` lists hidden layer widths, e.g. nine 64s for the 11-layer default.
  static PinnModel create(const std::vector<int>& hidden, bool twin, std::uint64_t seed, const NormalizationSpec& norm);

  const NormalizationSpec& normalization() const { return norm_; }
  const std::vector<Network>& networks() const { return nets_; }
  bool twin() const { return nets_.size() == 2; }

  Eigen::Index parameter_count() const;
  VectorXd flatten() const;
  void assign(const VectorXd& p);

  /// Normalized outputs, 2 x N, for normalized inputs X (2 x N).
  MatrixXd forward(const MatrixXd& X) const;

  /// States and input derivatives at X; tapes are filled for `backward`.
  StateJet jet(const MatrixXd& X, std::vector<MlpTape<double>>* tapes) const;
  /// Value-only evaluation with tapes for `backward_values`.
  MatrixXd forward_taped(const MatrixXd& X, std::vector<MlpTape<double>>& tapes) const;

  /// Parameter gradient given d loss / d jet component.
  VectorXd backward(const std::vector<MlpTape<double>>& tapes, const StateJet& grad) const;
  /// Parameter gradient given d loss / d output values (2 x N).
  VectorXd backward_values(const std::vector<MlpTape<double>>& tapes, const MatrixXd& grad) const;

  NetworkBundle bundle(const std::string& prefix) const;
  static PinnModel from_bundle(const NetworkBundle& bundle, const std::string& prefix, const NormalizationSpec& norm);

 private:
  std::vector<Network> nets_;
  NormalizationSpec norm_;
};

/// Inputs of a point set mapped into the unit box, 2 x N.
MatrixXd normalized_inputs(const ArrayXd& x, const ArrayXd& t, const NormalizationSpec& norm);

/// Observations in normalized units.
struct NormalizedObservations {
  MatrixXd X;
  ArrayXd rho, v;
};
NormalizedObservations normalize_observations(const ObservationSet& obs, const NormalizationSpec& norm);

/// Weighted mean-square data misfit; `grad` (optional) receives the parameter gradient.
double data_loss(const PinnModel& model, const NormalizedObservations& obs, const LossWeights& w,
                 VectorXd* grad = nullptr);
double data_loss(const PinnModel& model, const ObservationSet& obs, const LossWeights& w, VectorXd* grad = nullptr);

PhysicsTerms physics_loss(const PinnModel& model, const MatrixXd& colloc_X, PhysicsModel physics,
                          const UnderwoodParams& fd, const LossWeights& w, VectorXd* grad = nullptr);
PhysicsTerms lwr_physics_loss(const PinnModel& model, const CollocationSet& colloc, const UnderwoodParams& fd,
                              const LossWeights& w, VectorXd* grad = nullptr);
PhysicsTerms arz_physics_loss(const PinnModel& model, const CollocationSet& colloc, const UnderwoodParams& fd,
                              const LossWeights& w, VectorXd* grad = nullptr);

struct TrainConfig {
  std::vector<int> hidden = std::vector<int>(9, 64);
  bool twin = false;
  double learning_rate = 1e-3;
  int epochs = 20000;
  int patience = 2000;
  double min_delta = 1e-6;
  int obs_batch = 0;     // 0 = full batch
  int colloc_batch = 0;  // 0 = full batch
  bool resample_collocation = false;
  bool vary_member_seeds = false;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::Gaussian;
};

struct AlphaMember {
  double alpha = 0.5;
  UnderwoodParams fd;
  PinnModel model;
  std::vector<TraceEntry> trace;
  double initial_loss = 0.0;  // full-data loss before training
  double final_loss = 0.0;    // full-data loss after training
};

AlphaMember train_member(const ObservationSet& obs, const CollocationSet& colloc, const UnderwoodParams& fd,
                         double alpha, PhysicsModel physics, const LossWeights& weights, const TrainConfig& config,
                         std::uint64_t seed, const NormalizationSpec& norm);

/// Physical-unit (rho, v) predictions on every grid cell.
std::pair<MatrixXd, MatrixXd> predict_grid(const PinnModel& model, const GridGeometry& geometry);

struct FamilyResult {
  std::vector<AlphaMember> members;
  EstimateField field;
};

FamilyResult train_family(const ObservationSet& obs, const CollocationSet& colloc, const PercentileFDFamily& family,
                          PhysicsModel physics, const LossWeights& weights, const TrainConfig& config,
                          std::uint64_t seed, const NormalizationSpec& norm, const GridGeometry& geometry, int jobs = 1);

}  // namespace spidl
