#pragma once

#include "kdiag/nn/params.hpp"

namespace kdiag::nn {

template <class S>
struct LayerNormCache {
  Mat<S> xhat;    // normalized input
  Vec<S> rstd;    // per-row 1/sqrt(var + eps)
};

template <class S>
struct LayerNorm {
  Mat<S> gamma;  // 1 x d
  Mat<S> beta;   // 1 x d
  Mat<S> ggamma;
  Mat<S> gbeta;
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;

  explicit LayerNorm(Eigen::Index d) {
    gamma = Mat<S>::Ones(1, d);
    beta = Mat<S>::Zero(1, d);
    ggamma = Mat<S>::Zero(1, d);
    gbeta = Mat<S>::Zero(1, d);
  }

  Mat<S> forward(const Mat<S>& x, LayerNormCache<S>& c) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    c.xhat.resize(n, d);
    c.rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      S mean = x.row(i).mean();
      S var = (x.row(i).array() - mean).square().mean();
      S rstd = S(1) / std::sqrt(var + static_cast<S>(kEps));
      c.rstd(i) = rstd;
      c.xhat.row(i) = (x.row(i).array() - mean) * rstd;
    }
    Mat<S> y = c.xhat;
    for (Eigen::Index i = 0; i < n; ++i)
      y.row(i) = y.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    return y;
  }

  void backward(const LayerNormCache<S>& c, const Mat<S>& gy, Mat<S>& gx_accum) {
    const Eigen::Index n = gy.rows(), d = gy.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
      ggamma.row(0) += gy.row(i).cwiseProduct(c.xhat.row(i));
      gbeta.row(0) += gy.row(i);
      // gxhat = gy * gamma; gx = rstd * (gxhat - mean(gxhat) - xhat * mean(gxhat .* xhat))
      Eigen::Matrix<S, 1, Eigen::Dynamic> gxhat = gy.row(i).cwiseProduct(gamma.row(0));
      S m1 = gxhat.mean();
      S m2 = gxhat.cwiseProduct(c.xhat.row(i)).mean();
      gx_accum.row(i) +=
          ((((gxhat.array() - m1) - c.xhat.row(i).array() * m2) * c.rstd(i)).matrix());
    }
    (void)d;
  }

  void collect(ParamList<S>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma});
    out.push_back({prefix + ".beta", &beta, &gbeta});
  }
};

}  // namespace kdiag::nn
