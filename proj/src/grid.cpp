#include "spidl/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string_view>

namespace spidl {

namespace {

constexpr std::string_view kMetaHeader = "nx,nt,dx,dt,x0,t0";
constexpr std::string_view kCellHeader = "x_index,t_index,density_veh_per_m,speed_m_per_s";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("cannot parse " + std::string(name) + " from '" + std::string(field) + "'", line);
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void TrafficGrid::validate() const {
  if (densities.rows() != speeds.rows() || densities.cols() != speeds.cols()) {
    throw ShapeError("density and speed matrices differ in shape");
  }
  if (nx() < 2 || nt() < 2) throw ShapeError("grid must be at least 2x2");
  if (!(dx > 0.0) || !(dt > 0.0)) throw ValidationError("dx and dt must be positive");
  for (Eigen::Index i = 0; i < nx(); ++i) {
    for (Eigen::Index k = 0; k < nt(); ++k) {
      const double r = densities(i, k);
      const double v = speeds(i, k);
      if (!std::isfinite(r) || !std::isfinite(v)) {
        throw ValidationError("non-finite state at cell (" + std::to_string(i) + "," + std::to_string(k) + ")");
      }
      if (r < 0.0 || v < 0.0) {
        throw ValidationError("negative state at cell (" + std::to_string(i) + "," + std::to_string(k) + ")");
      }
      if (!std::isfinite(r * v)) throw ValidationError("non-finite flow");
    }
  }
}

TrafficGrid ingest_grid(const std::filesystem::path& path, std::optional<double> dx, std::optional<double> dt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grid file " + path.string());

  std::string line;
  std::size_t line_no = 0;
  auto next_content_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next_content_line()) throw ParseError("empty grid file", line_no);
  if (line == kMetaHeader && !next_content_line()) throw ParseError("missing grid metadata", line_no);
  auto meta = split_commas(line);
  if (meta.size() != 6) throw ParseError("metadata needs 6 fields (nx,nt,dx,dt,x0,t0)", line_no);

  const auto nx = parse_field<long>(meta[0], line_no, "nx");
  const auto nt = parse_field<long>(meta[1], line_no, "nt");
  TrafficGrid grid;
  grid.dx = parse_field<double>(meta[2], line_no, "dx");
  grid.dt = parse_field<double>(meta[3], line_no, "dt");
  grid.x0 = parse_field<double>(meta[4], line_no, "x0");
  grid.t0 = parse_field<double>(meta[5], line_no, "t0");
  if (nx < 2 || nt < 2) throw ShapeError("declared shape must be at least 2x2");
  if (dx && std::abs(*dx - grid.dx) > 1e-12 * std::abs(*dx)) {
    throw ValidationError("dx in file (" + format_double(grid.dx) + ") differs from requested " + format_double(*dx));
  }
  if (dt && std::abs(*dt - grid.dt) > 1e-12 * std::abs(*dt)) {
    throw ValidationError("dt in file (" + format_double(grid.dt) + ") differs from requested " + format_double(*dt));
  }

  grid.densities = MatrixXd::Constant(nx, nt, std::numeric_limits<double>::quiet_NaN());
  grid.speeds = grid.densities;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nx, nt, false);
  long filled = 0;

  while (next_content_line()) {
    if (line == kCellHeader) continue;
    auto f = split_commas(line);
    if (f.size() != 4) throw ParseError("cell row needs 4 fields", line_no);
    const auto i = parse_field<long>(f[0], line_no, "x_index");
    const auto k = parse_field<long>(f[1], line_no, "t_index");
    const auto r = parse_field<double>(f[2], line_no, "density");
    const auto v = parse_field<double>(f[3], line_no, "speed");
    if (i < 0 || i >= nx || k < 0 || k >= nt) throw ShapeError("line " + std::to_string(line_no) + ": cell index outside declared shape");
    if (seen(i, k)) throw ShapeError("line " + std::to_string(line_no) + ": duplicate cell");
    if (std::isnan(r) || std::isnan(v)) throw ValidationError("line " + std::to_string(line_no) + ": NaN cell");
    if (r < 0.0 || v < 0.0) throw ValidationError("line " + std::to_string(line_no) + ": negative density or speed");
    seen(i, k) = true;
    grid.densities(i, k) = r;
    grid.speeds(i, k) = v;
    ++filled;
  }
  if (filled != nx * nt) {
    throw ShapeError("grid declares " + std::to_string(nx * nt) + " cells but file holds " + std::to_string(filled));
  }
  grid.validate();
  return grid;
}

void export_grid(const TrafficGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write grid file " + path.string());
  out << kMetaHeader << '\n'
      << grid.nx() << ',' << grid.nt() << ',' << format_double(grid.dx) << ',' << format_double(grid.dt) << ','
      << format_double(grid.x0) << ',' << format_double(grid.t0) << '\n'
      << kCellHeader << '\n';
  for (Eigen::Index i = 0; i < grid.nx(); ++i) {
    for (Eigen::Index k = 0; k < grid.nt(); ++k) {
      out << i << ',' << k << ',' << format_double(grid.densities(i, k)) << ',' << format_double(grid.speeds(i, k))
          << '\n';
    }
  }
}

std::vector<int> equispaced_rows(int nx, int k) {
  if (k < 1 || k > nx) throw ConfigError("detector count must be in [1, nx]");
  if (k == 1) return {0};
  std::vector<int> rows(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    rows[static_cast<std::size_t>(i)] =
        static_cast<int>(std::lround(static_cast<double>(i) * (nx - 1) / static_cast<double>(k - 1)));
  }
  return rows;
}

ObservationSet sample_detectors(const TrafficGrid& grid, int k, DetectorStrategy strategy, std::span<const int> rows) {
  const int nx = static_cast<int>(grid.nx());
  std::vector<int> chosen;
  if (strategy == DetectorStrategy::Equispaced) {
    chosen = equispaced_rows(nx, k);
  } else {
    chosen.assign(rows.begin(), rows.end());
    if (static_cast<int>(chosen.size()) != k) throw ConfigError("explicit row list length differs from k");
    if (k < 1 || k > nx) throw ConfigError("detector count must be in [1, nx]");
    std::set<int> unique(chosen.begin(), chosen.end());
    if (unique.size() != chosen.size()) throw ConfigError("duplicate detector rows");
    for (int r : chosen) {
      if (r < 0 || r >= nx) throw ConfigError("detector row " + std::to_string(r) + " outside grid");
    }
  }

  const Eigen::Index nt = grid.nt();
  const Eigen::Index n = static_cast<Eigen::Index>(chosen.size()) * nt;
  ObservationSet obs;
  obs.x.resize(n);
  obs.t.resize(n);
  obs.rho.resize(n);
  obs.v.resize(n);
  Eigen::Index p = 0;
  for (int r : chosen) {
    for (Eigen::Index k2 = 0; k2 < nt; ++k2, ++p) {
      obs.x(p) = grid.x_at(r);
      obs.t(p) = grid.t_at(k2);
      obs.rho(p) = grid.densities(r, k2);
      obs.v(p) = grid.speeds(r, k2);
    }
  }
  obs.detector_rows = std::move(chosen);
  return obs;
}

CollocationSet sample_collocation(const TrafficGrid& grid, Eigen::Index n_c, std::uint64_t seed,
                                  CollocationScheme scheme) {
  if (n_c < 1) throw ConfigError("collocation count must be positive");
  CollocationSet c;
  c.x.resize(n_c);
  c.t.resize(n_c);
  if (scheme == CollocationScheme::UniformRandom) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < n_c; ++i) {
      c.x(i) = grid.x0 + unit(rng) * grid.length();
      c.t(i) = grid.t0 + unit(rng) * grid.duration();
    }
  } else {
    // Evenly strided walk over the row-major cell lattice.
    const Eigen::Index cells = grid.nx() * grid.nt();
    for (Eigen::Index i = 0; i < n_c; ++i) {
      const Eigen::Index flat = (i * cells) / n_c;
      c.x(i) = grid.x_at(flat / grid.nt());
      c.t(i) = grid.t_at(flat % grid.nt());
    }
  }
  return c;
}

NormalizationSpec make_normalizer(const TrafficGrid& grid) {
  NormalizationSpec n;
  n.x_origin = grid.x0;
  n.t_origin = grid.t0;
  n.x_scale = grid.length();
  n.t_scale = grid.duration();
  const double rmax = grid.densities.maxCoeff();
  const double vmax = grid.speeds.maxCoeff();
  n.rho_scale = rmax > 0.0 ? rmax : 1.0;
  n.v_scale = vmax > 0.0 ? vmax : 1.0;
  return n;
}

NormalizationSpec make_normalizer(const TrafficGrid& grid, const ObservationSet& obs) {
  NormalizationSpec n = make_normalizer(grid);
  const double rmax = obs.size() > 0 ? obs.rho.maxCoeff() : 0.0;
  const double vmax = obs.size() > 0 ? obs.v.maxCoeff() : 0.0;
  n.rho_scale = rmax > 0.0 ? rmax : 1.0;
  n.v_scale = vmax > 0.0 ? vmax : 1.0;
  return n;
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> unobserved_mask(const TrafficGrid& grid,
                                                                    std::span<const int> detector_rows) {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(grid.nx(), grid.nt(), true);
  for (int r : detector_rows) mask.row(r).setConstant(false);
  return mask;
}

}  // namespace spidl
