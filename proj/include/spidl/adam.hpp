#pragma once

#include "spidl/common.hpp"

namespace spidl {

template <typename Scalar>
class Adam {
 public:
  explicit Adam(Scalar learning_rate, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                Scalar epsilon = Scalar(1e-8))
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(Vector<Scalar>& params, const Vector<Scalar>& grad) {
    if (m_.size() != params.size()) {
      m_ = Vector<Scalar>::Zero(params.size());
      v_ = Vector<Scalar>::Zero(params.size());
      t_ = 0;
    }
    ++t_;
    m_ = beta1_ * m_ + (1 - beta1_) * grad;
    v_ = beta2_ * v_ + (1 - beta2_) * grad.cwiseAbs2();
    const Scalar c1 = 1 - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = 1 - std::pow(beta2_, static_cast<Scalar>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  Scalar learning_rate() const { return lr_; }
  void set_learning_rate(Scalar lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  Vector<Scalar> m_, v_;
  long t_ = 0;
};

}  // namespace spidl
