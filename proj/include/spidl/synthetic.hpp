#pragma once

#include "spidl/grid.hpp"
#include "spidl/percentile_fd.hpp"

#include <filesystem>
#include <string>

namespace spidl {

enum class InitialProfile { Uniform, Riemann, Pulse, RiemannPulse };
enum class BoundaryKind { Periodic, Transmissive, Forced };

/// Scenario for the Godunov-LWR ground-truth generator.
struct Scenario {
  // [domain]
  int nx = 21;
  int nt = 600;
  double dx = 30.0;
  double dt = 1.5;
  int substeps = 1;  // solver steps per output step
  double x0 = 0.0;
  double t0 = 0.0;

  // [initial]
  InitialProfile initial = InitialProfile::Uniform;
  double base_density = 0.1;
  double left_density = 0.05;
  double right_density = 0.3;
  double interface_x = 300.0;  // m, relative to x0
  double pulse_center = 150.0;
  double pulse_width = 60.0;
  double pulse_amplitude = 0.1;

  // [boundary]
  BoundaryKind boundary = BoundaryKind::Transmissive;
  double inflow_density = -1.0;   // < 0 means zero-gradient upstream
  double outflow_density = -1.0;  // < 0 means zero-gradient downstream
  double ramp_density = 0.0;      // downstream blockage surrogate
  double ramp_start = 0.0;
  double ramp_end = 0.0;

  // [noise]
  double speed_cv = 0.0;
  std::uint64_t seed = 1;

  // [fundamental_diagram]
  UnderwoodParams fd{};
};

InitialProfile parse_initial(const std::string& name);
std::string initial_name(InitialProfile p);
BoundaryKind parse_boundary(const std::string& name);
std::string boundary_name(BoundaryKind b);

/// Reads the key-value scenario file ([domain], [initial], [boundary], [noise],
/// optional [fundamental_diagram]). Unknown sections or keys are rejected.
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Godunov flux for the concave Underwood flux q(rho) = rho v_f exp(-rho/rho_cr).
double godunov_flux(const UnderwoodParams& fd, double rho_left, double rho_right);

/// Simulates LWR with a first-order Godunov scheme and applies mean-preserving
/// log-normal speed noise with coefficient of variation `noise_cv`.
TrafficGrid generate_synthetic_lwr(const Scenario& scenario, const UnderwoodParams& fd, double noise_cv,
                                   std::uint64_t seed);

/// Noise-free density history before sampling to the output grid (for
/// conservation checks). Shape nx x nt.
MatrixXd simulate_lwr_density(const Scenario& scenario, const UnderwoodParams& fd);

}  // namespace spidl
