#pragma once

#include "kdiag/nn/params.hpp"

namespace kdiag::nn {

// Row-wise affine map: y = x W + b, x rows are items.
template <class S>
struct Linear {
  Mat<S> W;   // in x out
  Mat<S> b;   // 1 x out
  Mat<S> gW;
  Mat<S> gb;

  Linear() = default;

  Linear(Eigen::Index in, Eigen::Index out, Rng& rng, double init_scale) {
    W = gaussian_matrix<S>(rng, in, out, init_scale);
    b = Mat<S>::Zero(1, out);
    gW = Mat<S>::Zero(in, out);
    gb = Mat<S>::Zero(1, out);
  }

  static Linear zero_init(Eigen::Index in, Eigen::Index out) {
    Linear l;
    l.W = Mat<S>::Zero(in, out);
    l.b = Mat<S>::Zero(1, out);
    l.gW = Mat<S>::Zero(in, out);
    l.gb = Mat<S>::Zero(1, out);
    return l;
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  // Accumulates parameter grads; adds the input gradient into gx when given.
  void backward(const Mat<S>& x, const Mat<S>& gy, Mat<S>* gx) {
    gW.noalias() += x.transpose() * gy;
    gb.row(0) += gy.colwise().sum();
    if (gx) gx->noalias() += gy * W.transpose();
  }

  void collect(ParamList<S>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, &gW});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

}  // namespace kdiag::nn
