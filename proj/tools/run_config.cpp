#include "run_config.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace spidl::cli {

using nlohmann::json;

Variant parse_variant(const std::string& s) {
  if (s == "alpha-lwr") return Variant::AlphaLwr;
  if (s == "alpha-arz") return Variant::AlphaArz;
  if (s == "beta") return Variant::Beta;
  throw ConfigError("unknown model variant '" + s + "' (expected alpha-lwr, alpha-arz or beta)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::AlphaLwr: return "alpha-lwr";
    case Variant::AlphaArz: return "alpha-arz";
    case Variant::Beta: return "beta";
  }
  return "beta";
}

namespace {

// Scalar conversions shared by the reader and the writer. Numbers are checked
// for kind so that 1.5 is never silently truncated into an integer field.
void read_value(const json& j, const std::string& at, double& out) {
  if (!j.is_number()) throw ConfigError(at + ": expected a number");
  out = j.get<double>();
}
void read_value(const json& j, const std::string& at, int& out) {
  if (!j.is_number_integer()) throw ConfigError(at + ": expected an integer");
  out = j.get<int>();
}
void read_value(const json& j, const std::string& at, Eigen::Index& out) {
  if (!j.is_number_integer()) throw ConfigError(at + ": expected an integer");
  out = j.get<Eigen::Index>();
}
void read_value(const json& j, const std::string& at, std::uint64_t& out) {
  if (!j.is_number_unsigned()) throw ConfigError(at + ": expected a non-negative integer");
  out = j.get<std::uint64_t>();
}
void read_value(const json& j, const std::string& at, bool& out) {
  if (!j.is_boolean()) throw ConfigError(at + ": expected true or false");
  out = j.get<bool>();
}
void read_value(const json& j, const std::string& at, std::string& out) {
  if (!j.is_string()) throw ConfigError(at + ": expected a string");
  out = j.get<std::string>();
}
void read_value(const json& j, const std::string& at, std::filesystem::path& out) {
  std::string s;
  read_value(j, at, s);
  out = s;
}
void read_value(const json& j, const std::string& at, std::optional<double>& out) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read_value(j, at, v);
  out = v;
}
template <typename T>
void read_value(const json& j, const std::string& at, std::vector<T>& out) {
  if (!j.is_array()) throw ConfigError(at + ": expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    T v{};
    read_value(j[i], at + "[" + std::to_string(i) + "]", v);
    out.push_back(v);
  }
}

// Enums travel as strings.
template <typename E>
struct EnumField {
  E& ref;
  E (*parse)(const std::string&);
  std::string (*name)(E);
};

template <typename E>
void read_value(const json& j, const std::string& at, EnumField<E>& f) {
  std::string s;
  read_value(j, at, s);
  try {
    f.ref = f.parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(at + ": " + e.what());
  }
}

json write_value(double v) { return v; }
json write_value(int v) { return v; }
json write_value(long v) { return v; }
json write_value(std::uint64_t v) { return v; }
json write_value(bool v) { return v; }
json write_value(const std::filesystem::path& v) { return v.generic_string(); }
json write_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
template <typename T>
json write_value(const std::vector<T>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(write_value(x));
  return a;
}
template <typename E>
json write_value(const EnumField<E>& f) { return f.name(f.ref); }

CollocationScheme parse_scheme(const std::string& s) {
  if (s == "uniform") return CollocationScheme::UniformRandom;
  if (s == "grid") return CollocationScheme::Grid;
  throw ConfigError("unknown collocation scheme '" + s + "' (expected uniform or grid)");
}
std::string scheme_name(CollocationScheme s) { return s == CollocationScheme::Grid ? "grid" : "uniform"; }

CiMethod parse_ci(const std::string& s) {
  if (s == "gaussian") return CiMethod::Gaussian;
  if (s == "empirical") return CiMethod::Empirical;
  throw ConfigError("unknown CI method '" + s + "' (expected gaussian or empirical)");
}
std::string ci_name(CiMethod m) { return m == CiMethod::Empirical ? "empirical" : "gaussian"; }

/// Reads present keys into fields and rejects any key no field claimed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, child(key), out);
  }
  template <typename E>
  void field(const char* key, EnumField<E> f) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, child(key), f);
  }
  template <typename F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Reader sub(*it, child(key));
      body(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + child(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <typename T>
  void field(const char* key, const T& v) { j_[key] = write_value(v); }
  template <typename E>
  void field(const char* key, EnumField<E> f) { j_[key] = write_value(f); }
  template <typename F>
  void section(const char* key, F&& body) {
    Writer sub;
    body(sub);
    j_[key] = std::move(sub.j_);
  }

  json j_ = json::object();
};

template <typename V>
void visit_scenario(V& v, Scenario& s) {
  v.section("domain", [&](auto& d) {
    d.field("nx", s.nx);
    d.field("nt", s.nt);
    d.field("dx", s.dx);
    d.field("dt", s.dt);
    d.field("substeps", s.substeps);
    d.field("x0", s.x0);
    d.field("t0", s.t0);
  });
  v.section("initial", [&](auto& d) {
    d.field("type", EnumField<InitialProfile>{s.initial, parse_initial, initial_name});
    d.field("base_density", s.base_density);
    d.field("left_density", s.left_density);
    d.field("right_density", s.right_density);
    d.field("interface_x", s.interface_x);
    d.field("pulse_center", s.pulse_center);
    d.field("pulse_width", s.pulse_width);
    d.field("pulse_amplitude", s.pulse_amplitude);
  });
  v.section("boundary", [&](auto& d) {
    d.field("type", EnumField<BoundaryKind>{s.boundary, parse_boundary, boundary_name});
    d.field("inflow_density", s.inflow_density);
    d.field("outflow_density", s.outflow_density);
    d.field("ramp_density", s.ramp_density);
    d.field("ramp_start", s.ramp_start);
    d.field("ramp_end", s.ramp_end);
  });
  v.section("noise", [&](auto& d) {
    d.field("speed_cv", s.speed_cv);
    d.field("seed", s.seed);
  });
  v.section("fundamental_diagram", [&](auto& d) {
    d.field("rho_cr", s.fd.rho_cr);
    d.field("v_f", s.fd.v_f);
  });
}

template <typename V>
void visit_source(V& v, RunConfig& c) {
  v.section("data", [&](auto& d) {
    d.field("grid", c.grid_path);
    d.field("dx", c.dx);
    d.field("dt", c.dt);
  });
  v.section("generate", [&](auto& d) {
    d.field("scenario_file", c.scenario_path);
    d.field("noise_cv", c.noise_cv);
    d.section("scenario", [&](auto& s) { visit_scenario(s, c.scenario); });
  });
}

template <typename V>
void visit_detectors(V& v, RunConfig& c) {
  v.section("detectors", [&](auto& d) {
    d.field("count", c.detector_count);
    d.field("rows", c.detector_rows);
  });
}

template <typename V>
void visit_percentile(V& v, RunConfig& c) {
  v.section("percentile", [&](auto& d) {
    d.field("alphas", c.alphas);
    d.field("density_balanced", c.density_balanced);
    d.field("starts", c.calibration.starts);
    d.field("max_iterations", c.calibration.max_iterations);
    d.field("max_restarts", c.calibration.max_restarts);
    d.field("tolerance", c.calibration.tolerance);
    d.field("rho_cr_min", c.calibration.rho_cr_min);
    d.field("rho_cr_max", c.calibration.rho_cr_max);
    d.field("v_f_min", c.calibration.v_f_min);
    d.field("v_f_max", c.calibration.v_f_max);
    d.field("alpha_tolerance", c.calibration.alpha_tolerance);
  });
}

template <typename V>
void visit_process(V& v, RunConfig& c) {
  v.section("process", [&](auto& d) {
    d.field("intervals", c.process.intervals);
    d.field("n_min", c.process.n_min);
    d.field("v_max_factor", c.process.v_max_factor);
    d.field("max_evaluations", c.process.fit.max_evaluations);
    d.field("tolerance", c.process.fit.tolerance);
  });
}

template <typename V>
void visit_model(V& v, RunConfig& c) {
  v.section("collocation", [&](auto& d) {
    d.field("count", c.collocation_count);
    d.field("scheme", EnumField<CollocationScheme>{c.collocation_scheme, parse_scheme, scheme_name});
  });
  v.section("model", [&](auto& d) { d.field("variant", EnumField<Variant>{c.variant, parse_variant, variant_name}); });
  v.field("seed", c.seed);
}

template <typename V>
void visit_alpha(V& v, RunConfig& c) {
  v.section("alpha", [&](auto& d) {
    d.field("hidden", c.alpha.hidden);
    d.field("twin", c.alpha.twin);
    d.field("learning_rate", c.alpha.learning_rate);
    d.field("epochs", c.alpha.epochs);
    d.field("patience", c.alpha.patience);
    d.field("min_delta", c.alpha.min_delta);
    d.field("obs_batch", c.alpha.obs_batch);
    d.field("colloc_batch", c.alpha.colloc_batch);
    d.field("resample_collocation", c.alpha.resample_collocation);
    d.field("vary_member_seeds", c.alpha.vary_member_seeds);
    d.field("ci_level", c.alpha.ci_level);
    d.field("ci_method", EnumField<CiMethod>{c.alpha.ci_method, parse_ci, ci_name});
    d.section("weights", [&](auto& w) {
      w.field("beta_rho", c.loss.beta_rho);
      w.field("beta_v", c.loss.beta_v);
      w.field("gamma1", c.loss.gamma1);
      w.field("gamma2", c.loss.gamma2);
      w.field("eta1", c.loss.eta1);
      w.field("eta2", c.loss.eta2);
      w.field("eta3", c.loss.eta3);
      w.field("tau", c.loss.tau);
    });
  });
}

template <typename V>
void visit_beta(V& v, RunConfig& c) {
  v.section("beta", [&](auto& d) {
    d.section("shape", [&](auto& s) {
      s.field("latent", c.beta.shape.latent);
      s.field("encoder_layers", c.beta.shape.encoder_layers);
      s.field("encoder_width", c.beta.shape.encoder_width);
      s.field("decoder_layers", c.beta.shape.decoder_layers);
      s.field("decoder_width", c.beta.shape.decoder_width);
      s.field("b_low_rho", c.beta.shape.b_low_rho);
      s.field("b_low_v", c.beta.shape.b_low_v);
    });
    d.field("learning_rate", c.beta.learning_rate);
    d.field("epochs", c.beta.epochs);
    d.field("patience", c.beta.patience);
    d.field("min_delta", c.beta.min_delta);
    d.field("obs_batch", c.beta.obs_batch);
    d.field("colloc_batch", c.beta.colloc_batch);
    d.field("samples", c.beta.samples);
    d.field("warmup_fraction", c.beta.warmup_fraction);
    d.field("entropy_weight", c.beta.entropy_weight);
    d.field("kl_weight", c.beta.kl_weight);
    d.field("density_kl", c.beta.density_kl);
    d.section("kappa", [&](auto& k) {
      k.field("kappa1", c.kappa.kappa1);
      k.field("kappa2", c.kappa.kappa2);
      k.field("kappa3", c.kappa.kappa3);
    });
  });
}

template <typename V>
void visit_evaluate(V& v, RunConfig& c) {
  v.section("evaluate", [&](auto& d) {
    d.field("full_grid", c.report_full_grid);
    d.field("unobserved", c.report_unobserved);
    d.field("histogram_densities", c.histogram_densities);
    d.field("histogram_bins", c.histogram_bins);
    d.field("histogram_window", c.histogram_window);
    d.field("fd_draws", c.fd_draws);
    d.field("profile_rows", c.profile_rows);
  });
}

template <typename V>
void visit_all(V& v, RunConfig& c) {
  visit_source(v, c);
  visit_detectors(v, c);
  visit_percentile(v, c);
  visit_process(v, c);
  visit_model(v, c);
  visit_alpha(v, c);
  visit_beta(v, c);
  visit_evaluate(v, c);
  v.field("jobs", c.jobs);
  v.field("output_dir", c.output_dir);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void validate(const RunConfig& c) {
  require((!c.dx || *c.dx > 0.0) && (!c.dt || *c.dt > 0.0), "data.dx and data.dt must be positive");
  require(!c.noise_cv || *c.noise_cv >= 0.0, "generate.noise_cv must be non-negative");
  require(c.detector_count >= 1, "detectors.count must be at least 1");
  require(c.collocation_count >= 0, "collocation.count must be non-negative");
  require(!c.alphas.empty(), "percentile.alphas must not be empty");
  for (double a : c.alphas) require(a > 0.0 && a < 1.0, "percentile.alphas must lie in (0, 1)");
  require(c.calibration.starts >= 1, "percentile.starts must be at least 1");
  require(c.process.intervals >= 2 && c.process.n_min >= 2, "process.intervals and process.n_min must be >= 2");
  require(c.process.v_max_factor >= 1.0, "process.v_max_factor must be >= 1");
  require(!c.alpha.hidden.empty(), "alpha.hidden must list at least one layer");
  for (int h : c.alpha.hidden) require(h >= 1, "alpha.hidden widths must be positive");
  require(c.alpha.epochs >= 1 && c.beta.epochs >= 1, "epochs must be at least 1");
  require(c.alpha.learning_rate > 0.0 && c.beta.learning_rate > 0.0, "learning rates must be positive");
  require(c.alpha.ci_level > 0.0 && c.alpha.ci_level < 1.0, "alpha.ci_level must lie in (0, 1)");
  require(c.beta.samples >= 2, "beta.samples must be at least 2");
  require(c.beta.warmup_fraction >= 0.0 && c.beta.warmup_fraction <= 1.0, "beta.warmup_fraction must lie in [0, 1]");
  require(c.histogram_bins >= 1 && c.histogram_window > 0.0, "evaluate histogram settings must be positive");
  require(c.fd_draws >= 1, "evaluate.fd_draws must be at least 1");
  require(c.jobs >= 1, "jobs must be at least 1");
  try {
    c.loss.validate();
    c.kappa.validate();
    c.beta.shape.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "");
  visit_all(r, c);
  r.finish();
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  Writer w;
  visit_all(w, const_cast<RunConfig&>(c));
  return w.j_.dump(2);
}

std::string stage_hash(const RunConfig& c, Stage s) {
  auto& m = const_cast<RunConfig&>(c);
  Writer w;
  visit_source(w, m);
  if (s != Stage::Source) visit_detectors(w, m);
  if (s == Stage::Calibrate) visit_percentile(w, m);
  if (s == Stage::FitFd) visit_process(w, m);
  if (s == Stage::Train || s == Stage::Evaluate) {
    visit_model(w, m);
    if (c.variant == Variant::Beta) {
      visit_process(w, m);
      visit_beta(w, m);
    } else {
      visit_percentile(w, m);
      visit_alpha(w, m);
    }
  }
  if (s == Stage::Evaluate) visit_evaluate(w, m);
  return sha256_hex(w.j_.dump());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace spidl::cli
