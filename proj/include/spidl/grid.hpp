#pragma once

#include "spidl/common.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace spidl {

/// Lattice geometry without states.
struct GridGeometry {
  Eigen::Index nx = 2;
  Eigen::Index nt = 2;
  double dx = 30.0;
  double dt = 1.5;
  double x0 = 0.0;
  double t0 = 0.0;

  double x_at(Eigen::Index i) const { return x0 + static_cast<double>(i) * dx; }
  double t_at(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Dense space-time lattice of traffic states. Rows index detectors (space),
/// columns index time steps. Densities in veh/m, speeds in m/s.
struct TrafficGrid {
  MatrixXd densities;
  MatrixXd speeds;
  double dx = 30.0;
  double dt = 1.5;
  double x0 = 0.0;
  double t0 = 0.0;

  Eigen::Index nx() const { return densities.rows(); }
  Eigen::Index nt() const { return densities.cols(); }
  double length() const { return static_cast<double>(nx() - 1) * dx; }
  double duration() const { return static_cast<double>(nt() - 1) * dt; }
  double x_at(Eigen::Index i) const { return x0 + static_cast<double>(i) * dx; }
  double t_at(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }

  GridGeometry geometry() const { return {nx(), nt(), dx, dt, x0, t0}; }

  /// Throws ValidationError / ShapeError when an invariant is broken.
  void validate() const;
};

/// Labelled points taken from detector rows (struct-of-arrays).
struct ObservationSet {
  ArrayXd x, t, rho, v;
  std::vector<int> detector_rows;

  Eigen::Index size() const { return x.size(); }
};

/// Unlabelled residual points.
struct CollocationSet {
  ArrayXd x, t;

  Eigen::Index size() const { return x.size(); }
};

/// Affine maps between physical units and the unit box the networks see.
struct NormalizationSpec {
  double x_origin = 0.0;
  double t_origin = 0.0;
  double x_scale = 1.0;
  double t_scale = 1.0;
  double rho_scale = 1.0;
  double v_scale = 1.0;

  template <typename Derived>
  auto norm_x(const Eigen::ArrayBase<Derived>& x) const { return (x - x_origin) / x_scale; }
  template <typename Derived>
  auto norm_t(const Eigen::ArrayBase<Derived>& t) const { return (t - t_origin) / t_scale; }
  template <typename Derived>
  auto denorm_x(const Eigen::ArrayBase<Derived>& x) const { return x * x_scale + x_origin; }
  template <typename Derived>
  auto denorm_t(const Eigen::ArrayBase<Derived>& t) const { return t * t_scale + t_origin; }

  double norm_x(double x) const { return (x - x_origin) / x_scale; }
  double norm_t(double t) const { return (t - t_origin) / t_scale; }
  double denorm_x(double x) const { return x * x_scale + x_origin; }
  double denorm_t(double t) const { return t * t_scale + t_origin; }
  double norm_rho(double r) const { return r / rho_scale; }
  double norm_v(double v) const { return v / v_scale; }
  double denorm_rho(double r) const { return r * rho_scale; }
  double denorm_v(double v) const { return v * v_scale; }
};

enum class DetectorStrategy { Equispaced, ExplicitRows };
enum class CollocationScheme { UniformRandom, Grid };

TrafficGrid ingest_grid(const std::filesystem::path& path, std::optional<double> dx = std::nullopt,
                        std::optional<double> dt = std::nullopt);
void export_grid(const TrafficGrid& grid, const std::filesystem::path& path);

ObservationSet sample_detectors(const TrafficGrid& grid, int k, DetectorStrategy strategy,
                                std::span<const int> rows = {});
std::vector<int> equispaced_rows(int nx, int k);

CollocationSet sample_collocation(const TrafficGrid& grid, Eigen::Index n_c, std::uint64_t seed,
                                  CollocationScheme scheme);

NormalizationSpec make_normalizer(const TrafficGrid& grid);
/// Same geometry scales, state scales taken from the observed maxima only.
NormalizationSpec make_normalizer(const TrafficGrid& grid, const ObservationSet& obs);

/// Boolean mask (nx x nt) of cells that are not on any detector row.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> unobserved_mask(const TrafficGrid& grid,
                                                                    std::span<const int> detector_rows);

}  // namespace spidl
