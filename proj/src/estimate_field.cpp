#include "spidl/estimate_field.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace spidl {

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

double sorted_quantile(const std::vector<double>& s, double q) {
  if (s.empty()) throw InsufficientDataError("quantile of an empty sample");
  if (s.size() == 1) return s.front();
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

namespace {

void write_state(const std::filesystem::path& path, const MatrixXd& mean, const MatrixXd& std, const MatrixXd& lo,
                 const MatrixXd& hi) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "x_index,t_index,mean,std,ci_lo,ci_hi\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index k = 0; k < mean.cols(); ++k) {
      out << i << ',' << k << ',' << mean(i, k) << ',' << std(i, k) << ',' << lo(i, k) << ',' << hi(i, k) << '\n';
    }
  }
}

void read_state(const std::filesystem::path& path, Eigen::Index nx, Eigen::Index nt, MatrixXd& mean, MatrixXd& std,
                MatrixXd& lo, MatrixXd& hi) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  mean.resize(nx, nt);
  std.resize(nx, nt);
  lo.resize(nx, nt);
  hi.resize(nx, nt);
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Eigen::Index i = 0, k = 0;
    double a = 0, b = 0, c = 0, d = 0;
    if (!(ss >> i >> k >> a >> b >> c >> d) || i < 0 || i >= nx || k < 0 || k >= nt) {
      throw ParseError("malformed estimate row in " + path.filename().string(), line_no);
    }
    mean(i, k) = a;
    std(i, k) = b;
    lo(i, k) = c;
    hi(i, k) = d;
  }
}

}  // namespace

void summarize_layers(const std::vector<MatrixXd>& layers, double level, CiMethod method, MatrixXd& mean, MatrixXd& std,
                      MatrixXd& lo, MatrixXd& hi) {
  if (layers.empty()) throw DataError("no layers to summarize");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("CI level must be in (0,1)");
  const Eigen::Index rows = layers.front().rows();
  const Eigen::Index cols = layers.front().cols();
  const auto m = static_cast<double>(layers.size());
  mean = MatrixXd::Zero(rows, cols);
  for (const auto& l : layers) {
    if (l.rows() != rows || l.cols() != cols) throw ShapeError("layer shapes differ");
    mean += l;
  }
  mean /= m;
  std = MatrixXd::Zero(rows, cols);
  if (layers.size() > 1) {
    for (const auto& l : layers) std.array() += (l - mean).array().square();
    std = (std / (m - 1.0)).cwiseSqrt();
  }
  if (method == CiMethod::Gaussian) {
    const double z = normal_quantile(0.5 + 0.5 * level);
    lo = mean - z * std;
    hi = mean + z * std;
    return;
  }
  lo.resize(rows, cols);
  hi.resize(rows, cols);
  std::vector<double> cell(layers.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      for (std::size_t j = 0; j < layers.size(); ++j) cell[j] = layers[j](i, k);
      std::sort(cell.begin(), cell.end());
      lo(i, k) = std::min(sorted_quantile(cell, 0.5 - 0.5 * level), mean(i, k));
      hi(i, k) = std::max(sorted_quantile(cell, 0.5 + 0.5 * level), mean(i, k));
    }
  }
}

EstimateField field_from_layers(std::vector<MatrixXd> rho_layers, std::vector<MatrixXd> v_layers, double level,
                                CiMethod method) {
  EstimateField f;
  f.ci_level = level;
  f.ci_method = method;
  summarize_layers(rho_layers, level, method, f.rho_mean, f.rho_std, f.rho_lo, f.rho_hi);
  summarize_layers(v_layers, level, method, f.v_mean, f.v_std, f.v_lo, f.v_hi);
  f.rho_layers = std::move(rho_layers);
  f.v_layers = std::move(v_layers);
  return f;
}

void export_field(const EstimateField& f, const std::filesystem::path& dir, const std::string& metadata_json) {
  std::filesystem::create_directories(dir);
  write_state(dir / "density.csv", f.rho_mean, f.rho_std, f.rho_lo, f.rho_hi);
  write_state(dir / "speed.csv", f.v_mean, f.v_std, f.v_lo, f.v_hi);
  {
    std::ofstream out(dir / "layers.csv");
    out << "layer,x_index,t_index,density,speed\n" << std::setprecision(17);
    for (std::size_t j = 0; j < f.v_layers.size(); ++j) {
      const MatrixXd& r = f.rho_layers.empty() ? f.rho_mean : f.rho_layers[j];
      for (Eigen::Index i = 0; i < f.nx(); ++i) {
        for (Eigen::Index k = 0; k < f.nt(); ++k) out << j << ',' << i << ',' << k << ',' << r(i, k) << ',' << f.v_layers[j](i, k) << '\n';
      }
    }
  }
  nlohmann::json meta = metadata_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(metadata_json);
  meta["nx"] = f.nx();
  meta["nt"] = f.nt();
  meta["ci_level"] = f.ci_level;
  meta["ci_method"] = f.ci_method == CiMethod::Gaussian ? "gaussian" : "empirical";
  meta["layers"] = f.v_layers.size();
  meta["deterministic_density"] = f.rho_layers.empty();
  std::ofstream(dir / "metadata.json") << meta.dump(2) << '\n';
}

EstimateField import_field(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "metadata.json");
  if (!meta_in) throw DataError("missing estimate metadata in " + dir.string());
  const auto meta = nlohmann::json::parse(meta_in);
  EstimateField f;
  const auto nx = meta.at("nx").get<Eigen::Index>();
  const auto nt = meta.at("nt").get<Eigen::Index>();
  f.ci_level = meta.at("ci_level").get<double>();
  f.ci_method = meta.at("ci_method").get<std::string>() == "gaussian" ? CiMethod::Gaussian : CiMethod::Empirical;
  read_state(dir / "density.csv", nx, nt, f.rho_mean, f.rho_std, f.rho_lo, f.rho_hi);
  read_state(dir / "speed.csv", nx, nt, f.v_mean, f.v_std, f.v_lo, f.v_hi);
  const auto layers = meta.at("layers").get<std::size_t>();
  const bool det = meta.at("deterministic_density").get<bool>();
  f.v_layers.assign(layers, MatrixXd::Zero(nx, nt));
  if (!det) f.rho_layers.assign(layers, MatrixXd::Zero(nx, nt));
  std::ifstream in(dir / "layers.csv");
  if (!in) throw DataError("missing layers.csv in " + dir.string());
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::size_t j = 0;
    Eigen::Index i = 0, k = 0;
    double r = 0, v = 0;
    if (!(ss >> j >> i >> k >> r >> v) || j >= layers || i < 0 || i >= nx || k < 0 || k >= nt) {
      throw ParseError("malformed layers row", line_no);
    }
    f.v_layers[j](i, k) = v;
    if (!det) f.rho_layers[j](i, k) = r;
  }
  return f;
}

}  // namespace spidl
