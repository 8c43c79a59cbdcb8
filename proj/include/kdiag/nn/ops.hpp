#pragma once

#include "kdiag/common.hpp"

namespace kdiag::nn {

template <class S>
inline void softmax_rows(Mat<S>& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S m = x.row(i).maxCoeff();
    x.row(i) = (x.row(i).array() - m).exp();
    x.row(i) /= x.row(i).sum();
  }
}

// d(softmax)/dz applied to an upstream gradient, rows independent.
// p = softmax(z), returns gz = p .* (gp - rowsum(gp .* p)).
template <class S>
inline Mat<S> softmax_rows_backward(const Mat<S>& p, const Mat<S>& gp) {
  Mat<S> gz = gp;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    S dot = p.row(i).dot(gp.row(i));
    gz.row(i) = p.row(i).array() * (gp.row(i).array() - dot);
  }
  return gz;
}

template <class S>
inline S gelu(S x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return static_cast<S>(0.5 * static_cast<double>(x) * (1.0 + std::erf(static_cast<double>(x) * inv_sqrt2)));
}

template <class S>
inline S gelu_grad(S x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  double xd = static_cast<double>(x);
  double cdf = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
  double pdf = inv_sqrt2pi * std::exp(-0.5 * xd * xd);
  return static_cast<S>(cdf + xd * pdf);
}

template <class S>
inline void gelu_inplace(Mat<S>& x) {
  x = x.unaryExpr([](S v) { return gelu(v); });
}

template <class S>
inline Mat<S> relu(const Mat<S>& x) {
  return x.cwiseMax(S(0));
}

}  // namespace kdiag::nn
