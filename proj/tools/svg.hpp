#pragma once

#include "spidl/common.hpp"

#include <filesystem>
#include <string>
#include <utility>

// Small hand-written SVG renderer for the plot subcommand.
namespace spidl::svg {

using Range = std::pair<double, double>;

/// z is indexed (space row, time column); time runs along the horizontal axis.
void heatmap(const MatrixXd& z, Range t, Range x, Range z_range, const std::string& title, const std::string& x_label,
             const std::string& y_label, const std::filesystem::path& path);

/// Sampled (rho, v) scatter under the per-bin percentile band, its centre and the S3 fit.
void fd_band(const ArrayXd& rho, const ArrayXd& v, const ArrayXd& centers, const ArrayXd& lo, const ArrayXd& mid,
             const ArrayXd& hi, const ArrayXd& s3, const std::filesystem::path& path);

/// One bar panel per target density; rows of the histogram table.
void histograms(const ArrayXd& target, const ArrayXd& bin_lo, const ArrayXd& bin_hi, const ArrayXd& probability,
                const std::filesystem::path& path);

/// Speed time series per grid row: truth, estimate and CI band.
void profiles(const ArrayXd& row, const ArrayXd& t, const ArrayXd& truth, const ArrayXd& mean, const ArrayXd& lo,
              const ArrayXd& hi, const std::filesystem::path& path);

}  // namespace spidl::svg
