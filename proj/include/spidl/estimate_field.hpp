#pragma once

#include "spidl/common.hpp"
#include "spidl/grid.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace spidl {

enum class CiMethod { Gaussian, Empirical };

/// Per-cell distributional estimate of density and speed on a grid.
struct EstimateField {
  MatrixXd rho_mean, rho_std, rho_lo, rho_hi;
  MatrixXd v_mean, v_std, v_lo, v_hi;
  // Realizations behind the statistics: one layer per family member or per
  // speed sample. rho_layers may be empty when density is deterministic.
  std::vector<MatrixXd> rho_layers;
  std::vector<MatrixXd> v_layers;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::Gaussian;

  Eigen::Index nx() const { return rho_mean.rows(); }
  Eigen::Index nt() const { return rho_mean.cols(); }
  bool has_bounds() const { return rho_lo.size() > 0 && v_lo.size() > 0; }
};

/// Sample mean, sample standard deviation (n - 1) and CI bounds per cell.
/// Gaussian bounds are mean +/- z * std; empirical bounds are the
/// (1 - level)/2 and (1 + level)/2 quantiles of the layers.
void summarize_layers(const std::vector<MatrixXd>& layers, double level, CiMethod method, MatrixXd& mean,
                      MatrixXd& std, MatrixXd& lo, MatrixXd& hi);

EstimateField field_from_layers(std::vector<MatrixXd> rho_layers, std::vector<MatrixXd> v_layers, double level,
                                CiMethod method);

/// Writes density.csv, speed.csv (x_index,t_index,mean,std,ci_lo,ci_hi),
/// layers.csv (layer,x_index,t_index,density,speed) and a JSON sidecar
/// holding `metadata_json` plus the CI settings.
void export_field(const EstimateField& field, const std::filesystem::path& dir, const std::string& metadata_json);
EstimateField import_field(const std::filesystem::path& dir);

double normal_quantile(double p);
/// Linear-interpolated quantile (type 7) of an ascending sample.
double sorted_quantile(const std::vector<double>& sorted, double q);

}  // namespace spidl
