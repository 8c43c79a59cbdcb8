#pragma once

#include "kdiag/nn/linear.hpp"
#include "kdiag/nn/ops.hpp"

namespace kdiag::nn {

template <class S>
struct AttentionCache {
  Mat<S> Q, K, V;    // (B*Tq) x d and (B*Tkv) x d
  Mat<S> probs;      // (B*H*Tq) x Tkv, softmaxed scores
  Mat<S> ctx;        // (B*Tq) x d, concatenated head outputs before Wo
  int B = 0, Tq = 0, Tkv = 0;
};

// Multi-head scaled dot-product attention over a batch of B items stacked
// row-wise. Query rows attend key/value rows of the same item only.
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;
  Eigen::Index d = 0;

  MultiHeadAttention() = default;

  MultiHeadAttention(Eigen::Index dim, int num_heads, Rng& rng)
      : wq(dim, dim, rng, 1.0 / std::sqrt(static_cast<double>(dim))),
        wk(dim, dim, rng, 1.0 / std::sqrt(static_cast<double>(dim))),
        wv(dim, dim, rng, 1.0 / std::sqrt(static_cast<double>(dim))),
        wo(dim, dim, rng, 1.0 / std::sqrt(static_cast<double>(dim))),
        heads(num_heads),
        d(dim) {
    if (dim % num_heads != 0) throw ShapeError("attention: d must be divisible by heads");
  }

  Mat<S> forward(const Mat<S>& xq, const Mat<S>& xkv, int B, AttentionCache<S>& c) const {
    const int Tq = static_cast<int>(xq.rows()) / B;
    const int Tkv = static_cast<int>(xkv.rows()) / B;
    const Eigen::Index dh = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    c.B = B;
    c.Tq = Tq;
    c.Tkv = Tkv;
    c.Q = wq.forward(xq);
    c.K = wk.forward(xkv);
    c.V = wv.forward(xkv);
    c.probs.resize(static_cast<Eigen::Index>(B) * heads * Tq, Tkv);
    c.ctx.resize(xq.rows(), d);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        auto Qb = c.Q.block(b * Tq, h * dh, Tq, dh);
        auto Kb = c.K.block(b * Tkv, h * dh, Tkv, dh);
        auto Vb = c.V.block(b * Tkv, h * dh, Tkv, dh);
        Mat<S> scores = (Qb * Kb.transpose()) * scale;
        softmax_rows(scores);
        c.probs.block((static_cast<Eigen::Index>(b) * heads + h) * Tq, 0, Tq, Tkv) = scores;
        c.ctx.block(b * Tq, h * dh, Tq, dh).noalias() = scores * Vb;
      }
    }
    return wo.forward(c.ctx);
  }

  // Head-averaged attention of item b: Tq x Tkv, rows sum to 1.
  Mat<S> head_mean_attention(const AttentionCache<S>& c, int b) const {
    Mat<S> m = Mat<S>::Zero(c.Tq, c.Tkv);
    for (int h = 0; h < heads; ++h)
      m += c.probs.block((static_cast<Eigen::Index>(b) * heads + h) * c.Tq, 0, c.Tq, c.Tkv);
    return m / static_cast<S>(heads);
  }

  // gxq / gxkv are accumulated; pass the same matrix for self-attention.
  void backward(const Mat<S>& xq, const Mat<S>& xkv, const AttentionCache<S>& c,
                const Mat<S>& gout, Mat<S>& gxq, Mat<S>& gxkv) {
    const int B = c.B, Tq = c.Tq, Tkv = c.Tkv;
    const Eigen::Index dh = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    Mat<S> gctx = Mat<S>::Zero(c.ctx.rows(), d);
    wo.backward(c.ctx, gout, &gctx);
    Mat<S> gQ = Mat<S>::Zero(c.Q.rows(), d);
    Mat<S> gK = Mat<S>::Zero(c.K.rows(), d);
    Mat<S> gV = Mat<S>::Zero(c.V.rows(), d);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        auto P = c.probs.block((static_cast<Eigen::Index>(b) * heads + h) * Tq, 0, Tq, Tkv);
        auto Qb = c.Q.block(b * Tq, h * dh, Tq, dh);
        auto Kb = c.K.block(b * Tkv, h * dh, Tkv, dh);
        auto Vb = c.V.block(b * Tkv, h * dh, Tkv, dh);
        auto gctx_b = gctx.block(b * Tq, h * dh, Tq, dh);
        Mat<S> gP = gctx_b * Vb.transpose();
        gV.block(b * Tkv, h * dh, Tkv, dh).noalias() += P.transpose() * gctx_b;
        Mat<S> gscores = softmax_rows_backward(Mat<S>(P), gP) * scale;
        gQ.block(b * Tq, h * dh, Tq, dh).noalias() += gscores * Kb;
        gK.block(b * Tkv, h * dh, Tkv, dh).noalias() += gscores.transpose() * Qb;
      }
    }
    wq.backward(xq, gQ, &gxq);
    wk.backward(xkv, gK, &gxkv);
    wv.backward(xkv, gV, &gxkv);
  }

  void collect(ParamList<S>& out, const std::string& prefix) {
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
  }
};

}  // namespace kdiag::nn
