#pragma once

#include "spidl/common.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace spidl {

template <typename Scalar>
struct SimplexResult {
  Vector<Scalar> x;
  Scalar value{};
  int iterations = 0;
  bool converged = false;
};

/// Derivative-free Nelder-Mead minimization with standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2). Converges when
/// both the spread of simplex values and the simplex diameter drop below `tol`.
template <typename Scalar, typename F>
SimplexResult<Scalar> nelder_mead(F&& f, const Vector<Scalar>& start, const Vector<Scalar>& step, int max_iter,
                                  Scalar tol) {
  const Eigen::Index n = start.size();
  std::vector<Vector<Scalar>> pts(static_cast<std::size_t>(n + 1), start);
  std::vector<Scalar> vals(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += step(i);
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = f(pts[i]);

  std::vector<std::size_t> order(pts.size());
  SimplexResult<Scalar> out;
  for (int it = 0; it < max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    Scalar diameter = 0;
    for (const auto& p : pts) diameter = std::max(diameter, (p - pts[best]).cwiseAbs().maxCoeff());
    if (std::abs(vals[worst] - vals[best]) <= tol * (std::abs(vals[best]) + tol) && diameter <= std::sqrt(tol)) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    out.iterations = it + 1;

    Vector<Scalar> centroid = Vector<Scalar>::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<Scalar>(n);

    const Vector<Scalar> reflected = centroid + (centroid - pts[worst]);
    const Scalar fr = f(reflected);
    if (fr < vals[best]) {
      const Vector<Scalar> expanded = centroid + Scalar(2) * (centroid - pts[worst]);
      const Scalar fe = f(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector<Scalar> contracted = outside ? Vector<Scalar>(centroid + Scalar(0.5) * (reflected - centroid))
                                              : Vector<Scalar>(centroid + Scalar(0.5) * (pts[worst] - centroid));
    const Scalar fc = f(contracted);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + Scalar(0.5) * (pts[i] - pts[best]);
      vals[i] = f(pts[i]);
    }
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  out.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
  out.value = *best_it;
  return out;
}

}  // namespace spidl
