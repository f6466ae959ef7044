#pragma once

#include "spidl/estimate_field.hpp"
#include "spidl/grid.hpp"
#include "spidl/stochastic_fd.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace spidl {

using CellMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class MaskMode { FullGrid, Unobserved };

CellMask full_mask(Eigen::Index nx, Eigen::Index nt);
CellMask evaluation_mask(const TrafficGrid& truth, std::span<const int> detector_rows, MaskMode mode);

struct StateMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double l2 = 0.0;  // ||est - true||_2 / ||true||_2
};

/// MAE, RMSE and relative L2 over the masked cells.
StateMetrics state_metrics(const MatrixXd& est, const MatrixXd& truth, const CellMask& mask);

struct MetricReport {
  StateMetrics density, speed;
  Eigen::Index cells = 0;
  MaskMode mask = MaskMode::FullGrid;
  int detectors = 0;
  std::string variant;
  std::uint64_t seed = 0;
};

MetricReport compute_metrics(const EstimateField& est, const TrafficGrid& truth, const CellMask& mask);

struct CoverageReport {
  double level = 0.95;
  double density = 0.0;  // fraction of masked truth inside [lo, hi]
  double speed = 0.0;
  Eigen::Index cells = 0;
  bool density_interval = true;  // false for point density estimates; JSON then reports null
};

CoverageReport ci_coverage(const EstimateField& est, const TrafficGrid& truth, const CellMask& mask);

/// Estimated fundamental diagram: scatter of sampled (rho, v) pairs, a
/// per-density-bin percentile band and an S3 curve through the band centre.
struct FdBand {
  ArrayXd scatter_rho, scatter_v;
  ArrayXd centers, lo, mid, hi;  // per bin; NaN where the bin is empty
  ArrayXd counts;
  S3Params fit;
  bool fitted = false;
};

struct FdBandOptions {
  int bins = 30;
  double lower = 0.025;
  double upper = 0.975;
  int min_count = 5;
};

/// Draws `n_draws` (cell, layer) pairs. Fields without layers are sampled from
/// their Gaussian (mean, std) summary.
FdBand reconstruct_fd_scatter(const EstimateField& est, int n_draws, std::uint64_t seed,
                              const FdBandOptions& opts = {});

struct SpeedHistogram {
  double target = 0.0;
  ArrayXd edges;          // bin_count + 1 edges, m/s
  ArrayXd probabilities;  // sums to 1 unless empty
  Eigen::Index samples = 0;
  double q25 = 0.0, median = 0.0, q75 = 0.0;
  bool empty = true;

  double iqr() const { return q75 - q25; }
};

/// Speed histograms over cells whose estimated density lies within `window`
/// of each target. Speeds come from the field's layers (member or sample
/// realizations) or from the means when no layers exist. `v_max <= 0` uses the
/// largest estimated speed.
std::vector<SpeedHistogram> speed_histograms(const EstimateField& est, const std::vector<double>& densities,
                                             int bin_count, double window = 0.01, double v_max = 0.0);

/// Speed values per estimated-density decile (0 = lowest), pooled over layers.
std::vector<std::vector<double>> speeds_by_density_decile(const EstimateField& est);

std::string to_json(const MetricReport& m, const CoverageReport* coverage = nullptr);
void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& metrics,
                  const std::vector<CoverageReport>& coverage, const std::string& lineage_json);
void export_fd_band(const FdBand& band, const std::filesystem::path& scatter_csv, const std::filesystem::path& band_csv);
void export_histograms(const std::vector<SpeedHistogram>& h, const std::filesystem::path& path);

}  // namespace spidl
