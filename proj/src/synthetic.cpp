#include "spidl/synthetic.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>

namespace spidl {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kScenarioKeys = {
    {"domain", {"nx", "nt", "dx", "dt", "substeps", "x0", "t0"}},
    {"initial",
     {"type", "base_density", "left_density", "right_density", "interface_x", "pulse_center", "pulse_width",
      "pulse_amplitude"}},
    {"boundary", {"type", "inflow_density", "outflow_density", "ramp_density", "ramp_start", "ramp_end"}},
    {"noise", {"speed_cv", "seed"}},
    {"fundamental_diagram", {"rho_cr", "v_f"}},
};

double flux(const UnderwoodParams& fd, double rho) { return rho * fd.v_f * std::exp(-rho / fd.rho_cr); }

ArrayXd initial_density(const Scenario& s) {
  ArrayXd rho(s.nx);
  for (int i = 0; i < s.nx; ++i) {
    const double x = i * s.dx;
    double r = s.base_density;
    if (s.initial == InitialProfile::Riemann || s.initial == InitialProfile::RiemannPulse) {
      r = x < s.interface_x ? s.left_density : s.right_density;
    }
    if (s.initial == InitialProfile::Pulse || s.initial == InitialProfile::RiemannPulse) {
      const double u = (x - s.pulse_center) / s.pulse_width;
      r += s.pulse_amplitude * std::exp(-0.5 * u * u);
    }
    rho(i) = r;
  }
  return rho;
}

}  // namespace

InitialProfile parse_initial(const std::string& s) {
  if (s == "uniform") return InitialProfile::Uniform;
  if (s == "riemann") return InitialProfile::Riemann;
  if (s == "pulse") return InitialProfile::Pulse;
  if (s == "riemann+pulse") return InitialProfile::RiemannPulse;
  throw ConfigError("unknown initial profile '" + s + "'");
}

std::string initial_name(InitialProfile p) {
  switch (p) {
    case InitialProfile::Uniform: return "uniform";
    case InitialProfile::Riemann: return "riemann";
    case InitialProfile::Pulse: return "pulse";
    case InitialProfile::RiemannPulse: return "riemann+pulse";
  }
  return "uniform";
}

BoundaryKind parse_boundary(const std::string& s) {
  if (s == "periodic") return BoundaryKind::Periodic;
  if (s == "transmissive") return BoundaryKind::Transmissive;
  if (s == "forced") return BoundaryKind::Forced;
  throw ConfigError("unknown boundary kind '" + s + "'");
}

std::string boundary_name(BoundaryKind b) {
  switch (b) {
    case BoundaryKind::Periodic: return "periodic";
    case BoundaryKind::Transmissive: return "transmissive";
    case BoundaryKind::Forced: return "forced";
  }
  return "transmissive";
}

Scenario load_scenario(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  for (const auto& [section, body] : tree) {
    auto it = kScenarioKeys.find(section);
    if (it == kScenarioKeys.end()) throw ConfigError("unknown scenario section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }
  Scenario s;
  try {
    s.nx = tree.get("domain.nx", s.nx);
    s.nt = tree.get("domain.nt", s.nt);
    s.dx = tree.get("domain.dx", s.dx);
    s.dt = tree.get("domain.dt", s.dt);
    s.substeps = tree.get("domain.substeps", s.substeps);
    s.x0 = tree.get("domain.x0", s.x0);
    s.t0 = tree.get("domain.t0", s.t0);
    s.initial = parse_initial(tree.get<std::string>("initial.type", initial_name(s.initial)));
    s.base_density = tree.get("initial.base_density", s.base_density);
    s.left_density = tree.get("initial.left_density", s.left_density);
    s.right_density = tree.get("initial.right_density", s.right_density);
    s.interface_x = tree.get("initial.interface_x", s.interface_x);
    s.pulse_center = tree.get("initial.pulse_center", s.pulse_center);
    s.pulse_width = tree.get("initial.pulse_width", s.pulse_width);
    s.pulse_amplitude = tree.get("initial.pulse_amplitude", s.pulse_amplitude);
    s.boundary = parse_boundary(tree.get<std::string>("boundary.type", boundary_name(s.boundary)));
    s.inflow_density = tree.get("boundary.inflow_density", s.inflow_density);
    s.outflow_density = tree.get("boundary.outflow_density", s.outflow_density);
    s.ramp_density = tree.get("boundary.ramp_density", s.ramp_density);
    s.ramp_start = tree.get("boundary.ramp_start", s.ramp_start);
    s.ramp_end = tree.get("boundary.ramp_end", s.ramp_end);
    s.speed_cv = tree.get("noise.speed_cv", s.speed_cv);
    s.seed = tree.get("noise.seed", s.seed);
    s.fd.rho_cr = tree.get("fundamental_diagram.rho_cr", s.fd.rho_cr);
    s.fd.v_f = tree.get("fundamental_diagram.v_f", s.fd.v_f);
  } catch (const pt::ptree_bad_data& e) {
    throw ConfigError(std::string("bad scenario value: ") + e.what());
  }
  return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  pt::ptree t;
  t.put("domain.nx", s.nx);
  t.put("domain.nt", s.nt);
  t.put("domain.dx", s.dx);
  t.put("domain.dt", s.dt);
  t.put("domain.substeps", s.substeps);
  t.put("domain.x0", s.x0);
  t.put("domain.t0", s.t0);
  t.put("initial.type", initial_name(s.initial));
  t.put("initial.base_density", s.base_density);
  t.put("initial.left_density", s.left_density);
  t.put("initial.right_density", s.right_density);
  t.put("initial.interface_x", s.interface_x);
  t.put("initial.pulse_center", s.pulse_center);
  t.put("initial.pulse_width", s.pulse_width);
  t.put("initial.pulse_amplitude", s.pulse_amplitude);
  t.put("boundary.type", boundary_name(s.boundary));
  t.put("boundary.inflow_density", s.inflow_density);
  t.put("boundary.outflow_density", s.outflow_density);
  t.put("boundary.ramp_density", s.ramp_density);
  t.put("boundary.ramp_start", s.ramp_start);
  t.put("boundary.ramp_end", s.ramp_end);
  t.put("noise.speed_cv", s.speed_cv);
  t.put("noise.seed", s.seed);
  t.put("fundamental_diagram.rho_cr", s.fd.rho_cr);
  t.put("fundamental_diagram.v_f", s.fd.v_f);
  pt::write_ini(path.string(), t);
}

double godunov_flux(const UnderwoodParams& fd, double rho_left, double rho_right) {
  // Demand of the upstream cell vs supply of the downstream cell.
  const double q_max = flux(fd, fd.rho_cr);
  const double demand = rho_left <= fd.rho_cr ? flux(fd, rho_left) : q_max;
  const double supply = rho_right <= fd.rho_cr ? q_max : flux(fd, rho_right);
  return std::min(demand, supply);
}

MatrixXd simulate_lwr_density(const Scenario& s, const UnderwoodParams& fd) {
  fd.validate();
  if (s.nx < 2 || s.nt < 2) throw ConfigError("scenario grid must be at least 2x2");
  if (s.substeps < 1) throw ConfigError("substeps must be >= 1");
  const double h = s.dt / s.substeps;
  // Fastest characteristic of the Underwood flux is v_f at rho = 0.
  if (h * fd.v_f > s.dx) {
    const double suggested = s.dx / fd.v_f;
    throw ConfigError("CFL condition violated: solver step " + std::to_string(h) + " s exceeds dx/v_f = " +
                      std::to_string(suggested) + " s; use dt <= " + std::to_string(suggested * s.substeps) +
                      " or substeps >= " + std::to_string(static_cast<int>(std::ceil(s.dt * fd.v_f / s.dx))));
  }

  ArrayXd rho = initial_density(s);
  MatrixXd out(s.nx, s.nt);
  out.col(0) = rho.matrix();
  const double lambda = h / s.dx;
  ArrayXd fluxes(s.nx + 1);
  const int n = s.nx;
  for (int k = 1; k < s.nt; ++k) {
    for (int sub = 0; sub < s.substeps; ++sub) {
      const double time = ((k - 1) * s.substeps + sub) * h;
      double ghost_left = rho(0);
      double ghost_right = rho(n - 1);
      if (s.boundary == BoundaryKind::Periodic) {
        ghost_left = rho(n - 1);
        ghost_right = rho(0);
      } else if (s.boundary == BoundaryKind::Forced) {
        if (s.inflow_density >= 0.0) ghost_left = s.inflow_density;
        if (s.outflow_density >= 0.0) ghost_right = s.outflow_density;
        if (time >= s.ramp_start && time < s.ramp_end) ghost_right = s.ramp_density;
      }
      fluxes(0) = godunov_flux(fd, ghost_left, rho(0));
      for (int i = 1; i < n; ++i) fluxes(i) = godunov_flux(fd, rho(i - 1), rho(i));
      fluxes(n) = godunov_flux(fd, rho(n - 1), ghost_right);
      if (s.boundary == BoundaryKind::Periodic) fluxes(0) = fluxes(n);
      rho -= lambda * (fluxes.tail(n) - fluxes.head(n));
    }
    out.col(k) = rho.matrix();
  }
  return out;
}

TrafficGrid generate_synthetic_lwr(const Scenario& s, const UnderwoodParams& fd, double noise_cv, std::uint64_t seed) {
  if (noise_cv < 0.0) throw ConfigError("noise coefficient of variation must be non-negative");
  TrafficGrid g;
  g.dx = s.dx;
  g.dt = s.dt;
  g.x0 = s.x0;
  g.t0 = s.t0;
  g.densities = simulate_lwr_density(s, fd).cwiseMax(0.0);
  g.speeds = underwood_speed(fd, g.densities.array()).matrix();
  if (noise_cv > 0.0) {
    // Log-normal with unit mean: sigma^2 = ln(1 + cv^2), mu = -sigma^2/2.
    const double sigma = std::sqrt(std::log1p(noise_cv * noise_cv));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(-0.5 * sigma * sigma, sigma);
    for (Eigen::Index i = 0; i < g.speeds.rows(); ++i) {
      for (Eigen::Index k = 0; k < g.speeds.cols(); ++k) g.speeds(i, k) *= std::exp(normal(rng));
    }
  }
  g.validate();
  return g;
}

}  // namespace spidl
