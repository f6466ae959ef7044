#include "spidl/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace spidl {

namespace {
constexpr const char* kMagic = "spidl-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

void save_checkpoint(const NetworkBundle& networks, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kMagic << ' ' << kVersion << '\n' << "networks " << networks.size() << '\n';
  for (const auto& [name, net] : networks) {
    out << "network " << name << '\n' << "sizes";
    for (int s : net.sizes()) out << ' ' << s;
    out << "\nactivations";
    for (const auto& l : net.layers()) out << ' ' << activation_name(l.activation);
    const VectorXd p = net.flatten();
    out << "\nparams " << p.size() << '\n' << std::hexfloat;
    for (Eigen::Index i = 0; i < p.size(); ++i) out << p(i) << '\n';
    out << std::defaultfloat;
  }
}

NetworkBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic, word;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw DataError("not a checkpoint file: " + path.string());
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  if (!(in >> word >> count) || word != "networks") throw DataError("corrupt checkpoint header");

  NetworkBundle bundle;
  for (std::size_t n = 0; n < count; ++n) {
    std::string name;
    if (!(in >> word >> name) || word != "network") throw DataError("corrupt checkpoint: expected network");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::istringstream sizes_line(line);
    sizes_line >> word;
    std::vector<int> sizes;
    for (int s; sizes_line >> s;) sizes.push_back(s);
    std::getline(in, line);
    std::istringstream act_line(line);
    act_line >> word;
    std::vector<Activation> acts;
    for (std::string a; act_line >> a;) acts.push_back(parse_activation(a));
    if (sizes.size() < 2 || acts.size() + 1 != sizes.size()) throw DataError("corrupt checkpoint layer description");

    Network net(sizes, Activation::Tanh, Activation::Identity);
    for (std::size_t l = 0; l < acts.size(); ++l) net.layers()[l].activation = acts[l];
    Eigen::Index np = 0;
    if (!(in >> word >> np) || word != "params" || np != net.parameter_count()) {
      throw DataError("checkpoint parameter count mismatch for " + name);
    }
    VectorXd p(np);
    for (Eigen::Index i = 0; i < np; ++i) {
      std::string tok;
      in >> tok;
      char* end = nullptr;
      p(i) = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str()) throw DataError("corrupt checkpoint value in " + name);
    }
    net.assign(p);
    bundle.emplace(name, std::move(net));
  }
  return bundle;
}

}  // namespace spidl
