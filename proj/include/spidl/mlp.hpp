#pragma once

#include "spidl/common.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace spidl {

enum class Activation { Tanh, Sigmoid, Identity };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

namespace detail {

// value, first and second derivative of the activation, all elementwise.
template <typename Scalar>
void activate(Activation a, const Matrix<Scalar>& z, Matrix<Scalar>& s, Matrix<Scalar>* d, Matrix<Scalar>* dd) {
  switch (a) {
    case Activation::Tanh:
      s = z.array().tanh().matrix();
      if (d) *d = (1 - s.array().square()).matrix();
      if (dd) *dd = (-2 * s.array() * d->array()).matrix();
      break;
    case Activation::Sigmoid:
      s = (1 / (1 + (-z.array()).exp())).matrix();
      if (d) *d = (s.array() * (1 - s.array())).matrix();
      if (dd) *dd = (d->array() * (1 - 2 * s.array())).matrix();
      break;
    case Activation::Identity:
      s = z;
      if (d) d->setOnes(z.rows(), z.cols());
      if (dd) dd->setZero(z.rows(), z.cols());
      break;
  }
}

}  // namespace detail

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
  Activation activation = Activation::Tanh;
};

/// Network output together with its derivatives with respect to selected
/// input coordinates. Columns are points.
template <typename Scalar>
struct Jet {
  Matrix<Scalar> value;
  std::vector<Matrix<Scalar>> d;  // d[k] = d value / d input[tangents[k]]
};

/// Forward cache needed by `Mlp::backward`.
template <typename Scalar>
struct MlpTape {
  struct LayerCache {
    Matrix<Scalar> input, z, s, d, dd;
    std::vector<Matrix<Scalar>> input_t, z_t;
  };
  std::vector<LayerCache> layers;
  std::vector<int> tangents;
};

template <typename Scalar>
struct MlpGradient {
  Vector<Scalar> params;  // flattened like Mlp::flatten
  Matrix<Scalar> input;   // d loss / d input values
};

/// Fully-connected network with per-layer activation. Inputs and outputs are
/// column batches. Supports forward-mode input tangents and reverse-mode
/// parameter gradients through both values and tangents.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  Mlp(const std::vector<int>& sizes, Activation hidden, Activation output) {
    if (sizes.size() < 2) throw ConfigError("network needs at least input and output sizes");
    for (int s : sizes) {
      if (s < 1) throw ConfigError("layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      DenseLayer<Scalar> layer;
      layer.weight = Matrix<Scalar>::Zero(sizes[l + 1], sizes[l]);
      layer.bias = Vector<Scalar>::Zero(sizes[l + 1]);
      layer.activation = l + 2 == sizes.size() ? output : hidden;
      layers_.push_back(std::move(layer));
    }
  }

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(const std::vector<int>& sizes, Activation hidden, Activation output, std::uint64_t seed) {
    Mlp net(sizes, hidden, output);
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers_) {
      const auto fan_in = static_cast<Scalar>(layer.weight.cols());
      const auto fan_out = static_cast<Scalar>(layer.weight.rows());
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const Scalar limit = std::sqrt(Scalar(6) / (fan_in + fan_out));
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = limit * static_cast<Scalar>(u(rng));
      }
    }
    return net;
  }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  Eigen::Index inputs() const { return layers_.front().weight.cols(); }
  Eigen::Index outputs() const { return layers_.back().weight.rows(); }
  std::size_t depth() const { return layers_.size(); }

  std::vector<int> sizes() const {
    std::vector<int> s{static_cast<int>(inputs())};
    for (const auto& l : layers_) s.push_back(static_cast<int>(l.weight.rows()));
    return s;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  Vector<Scalar> flatten() const {
    Vector<Scalar> p(parameter_count());
    Eigen::Index o = 0;
    for (const auto& l : layers_) {
      p.segment(o, l.weight.size()) = l.weight.reshaped();
      o += l.weight.size();
      p.segment(o, l.bias.size()) = l.bias;
      o += l.bias.size();
    }
    return p;
  }

  void assign(const Vector<Scalar>& p) {
    if (p.size() != parameter_count()) throw ShapeError("parameter vector length mismatch");
    Eigen::Index o = 0;
    for (auto& l : layers_) {
      l.weight.reshaped() = p.segment(o, l.weight.size());
      o += l.weight.size();
      l.bias = p.segment(o, l.bias.size());
      o += l.bias.size();
    }
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  /// Plain evaluation without caching. x is inputs() x N.
  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    check_input(x);
    Matrix<Scalar> h = x;
    Matrix<Scalar> s;
    for (const auto& l : layers_) {
      Matrix<Scalar> z = (l.weight * h).colwise() + l.bias;
      detail::activate<Scalar>(l.activation, z, s, nullptr, nullptr);
      h.swap(s);
    }
    return h;
  }

  /// Evaluation with derivatives along the listed input coordinates. When
  /// `tape` is non-null the intermediate state is kept for `backward`.
  Jet<Scalar> forward_jet(const Matrix<Scalar>& x, const std::vector<int>& tangents, MlpTape<Scalar>* tape) const {
    check_input(x);
    const Eigen::Index n = x.cols();
    const std::size_t nt = tangents.size();
    Matrix<Scalar> h = x;
    std::vector<Matrix<Scalar>> h_t(nt);
    for (std::size_t k = 0; k < nt; ++k) {
      if (tangents[k] < 0 || tangents[k] >= inputs()) throw ConfigError("tangent index outside input range");
      h_t[k] = Matrix<Scalar>::Zero(inputs(), n);
      h_t[k].row(tangents[k]).setOnes();
    }
    if (tape) {
      tape->layers.clear();
      tape->layers.reserve(layers_.size());
      tape->tangents = tangents;
    }
    for (const auto& l : layers_) {
      typename MlpTape<Scalar>::LayerCache c;
      c.z = (l.weight * h).colwise() + l.bias;
      detail::activate<Scalar>(l.activation, c.z, c.s, &c.d, nt > 0 ? &c.dd : nullptr);
      c.z_t.resize(nt);
      std::vector<Matrix<Scalar>> s_t(nt);
      for (std::size_t k = 0; k < nt; ++k) {
        c.z_t[k] = l.weight * h_t[k];
        s_t[k] = c.d.cwiseProduct(c.z_t[k]);
      }
      if (tape) {
        c.input = std::move(h);
        c.input_t = std::move(h_t);
        h = c.s;
        tape->layers.push_back(std::move(c));
      } else {
        h = std::move(c.s);
      }
      h_t = std::move(s_t);
    }
    return Jet<Scalar>{std::move(h), std::move(h_t)};
  }

  /// Reverse pass. `g_value` is d loss / d output; `g_tangent[k]` is
  /// d loss / d (d output / d input[k]) and may be empty.
  MlpGradient<Scalar> backward(const MlpTape<Scalar>& tape, const Matrix<Scalar>& g_value,
                               const std::vector<Matrix<Scalar>>& g_tangent = {}) const {
    if (tape.layers.size() != layers_.size()) throw ConfigError("tape does not match network");
    const std::size_t nt = g_tangent.size();
    if (nt != 0 && nt != tape.tangents.size()) throw ConfigError("tangent gradient count mismatch");

    MlpGradient<Scalar> out;
    out.params.resize(parameter_count());
    Eigen::Index offset = out.params.size();

    Matrix<Scalar> gs = g_value;
    std::vector<Matrix<Scalar>> gst = g_tangent;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const auto& c = tape.layers[li];
      Matrix<Scalar> gz = gs.cwiseProduct(c.d);
      std::vector<Matrix<Scalar>> gzt(nt);
      if (nt > 0) {
        Matrix<Scalar> gd = Matrix<Scalar>::Zero(c.z.rows(), c.z.cols());
        for (std::size_t k = 0; k < nt; ++k) {
          gd += gst[k].cwiseProduct(c.z_t[k]);
          gzt[k] = gst[k].cwiseProduct(c.d);
        }
        gz += gd.cwiseProduct(c.dd);
      }
      Matrix<Scalar> gw = gz * c.input.transpose();
      for (std::size_t k = 0; k < nt; ++k) gw.noalias() += gzt[k] * c.input_t[k].transpose();

      offset -= l.bias.size();
      out.params.segment(offset, l.bias.size()) = gz.rowwise().sum();
      offset -= l.weight.size();
      out.params.segment(offset, l.weight.size()) = gw.reshaped();

      gs = l.weight.transpose() * gz;
      for (std::size_t k = 0; k < nt; ++k) gst[k] = l.weight.transpose() * gzt[k];
    }
    out.input = std::move(gs);
    return out;
  }

 private:
  void check_input(const Matrix<Scalar>& x) const {
    if (layers_.empty()) throw ConfigError("empty network");
    if (x.rows() != inputs()) throw ShapeError("network input has wrong dimension");
  }

  std::vector<DenseLayer<Scalar>> layers_;
};

using Network = Mlp<double>;

}  // namespace spidl
