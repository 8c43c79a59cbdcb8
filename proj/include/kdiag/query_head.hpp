#pragma once

#include "kdiag/nn/attention.hpp"
#include "kdiag/nn/layernorm.hpp"
#include "kdiag/nn/linear.hpp"
#include "kdiag/nn/ops.hpp"

namespace kdiag::query {

struct QueryHeadConfig {
  int layers = 4;
  int heads = 4;
  int d = 256;
  int ffn_width = 0;          // 0: use 4*d
  bool self_attention = true; // queries exchange information before attending
  bool two_layer_head = false;

  int ffn() const { return ffn_width > 0 ? ffn_width : 4 * d; }
};

// One pre-norm decoder block: optional query self-attention, cross-attention
// from queries to visual tokens, then a GELU feed-forward, all residual.
// Layer norms apply to the query stream only; tokens enter cross-attention
// as provided.
template <class S>
struct DecoderLayer {
  nn::LayerNorm<S> ln_self, ln_cross, ln_ffn;
  nn::MultiHeadAttention<S> self_attn, cross_attn;
  nn::Linear<S> ff1, ff2;
  bool use_self = true;

  DecoderLayer() = default;

  DecoderLayer(const QueryHeadConfig& cfg, Rng& rng)
      : ln_self(cfg.d),
        ln_cross(cfg.d),
        ln_ffn(cfg.d),
        self_attn(cfg.d, cfg.heads, rng),
        cross_attn(cfg.d, cfg.heads, rng),
        ff1(cfg.d, cfg.ffn(), rng, 1.0 / std::sqrt(static_cast<double>(cfg.d))),
        ff2(cfg.ffn(), cfg.d, rng, 1.0 / std::sqrt(static_cast<double>(cfg.ffn()))),
        use_self(cfg.self_attention) {}

  struct Cache {
    Mat<S> x_in, n_self, x1, n_cross, x2, n_ffn, h1, h1g;
    nn::LayerNormCache<S> c_ln_self, c_ln_cross, c_ln_ffn;
    nn::AttentionCache<S> c_self, c_cross;
  };

  Mat<S> forward(const Mat<S>& x, const Mat<S>& tokens, int B, Cache& c) const {
    c.x_in = x;
    if (use_self) {
      c.n_self = ln_self.forward(x, c.c_ln_self);
      c.x1 = x + self_attn.forward(c.n_self, c.n_self, B, c.c_self);
    } else {
      c.x1 = x;
    }
    c.n_cross = ln_cross.forward(c.x1, c.c_ln_cross);
    c.x2 = c.x1 + cross_attn.forward(c.n_cross, tokens, B, c.c_cross);
    c.n_ffn = ln_ffn.forward(c.x2, c.c_ln_ffn);
    c.h1 = ff1.forward(c.n_ffn);
    c.h1g = c.h1.unaryExpr([](S v) { return nn::gelu(v); });
    return c.x2 + ff2.forward(c.h1g);
  }

  // Returns gradient w.r.t. the query stream input; token grads accumulate
  // into gtokens.
  Mat<S> backward(const Cache& c, const Mat<S>& tokens, const Mat<S>& gout, Mat<S>& gtokens) {
    Mat<S> gh1g = Mat<S>::Zero(c.h1g.rows(), c.h1g.cols());
    ff2.backward(c.h1g, gout, &gh1g);
    Mat<S> gh1 = gh1g.cwiseProduct(c.h1.unaryExpr([](S v) { return nn::gelu_grad(v); }));
    Mat<S> gn_ffn = Mat<S>::Zero(c.n_ffn.rows(), c.n_ffn.cols());
    ff1.backward(c.n_ffn, gh1, &gn_ffn);
    Mat<S> gx2 = gout;
    ln_ffn.backward(c.c_ln_ffn, gn_ffn, gx2);

    Mat<S> gn_cross = Mat<S>::Zero(c.n_cross.rows(), c.n_cross.cols());
    cross_attn.backward(c.n_cross, tokens, c.c_cross, gx2, gn_cross, gtokens);
    Mat<S> gx1 = gx2;
    ln_cross.backward(c.c_ln_cross, gn_cross, gx1);

    if (!use_self) return gx1;
    Mat<S> gn_self = Mat<S>::Zero(c.n_self.rows(), c.n_self.cols());
    self_attn.backward(c.n_self, c.n_self, c.c_self, gx1, gn_self, gn_self);
    Mat<S> gx = gx1;
    ln_self.backward(c.c_ln_self, gn_self, gx);
    return gx;
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    if (use_self) {
      ln_self.collect(out, prefix + ".ln_self");
      self_attn.collect(out, prefix + ".self_attn");
    }
    ln_cross.collect(out, prefix + ".ln_cross");
    cross_attn.collect(out, prefix + ".cross_attn");
    ln_ffn.collect(out, prefix + ".ln_ffn");
    ff1.collect(out, prefix + ".ff1");
    ff2.collect(out, prefix + ".ff2");
  }
};

// Per-image prediction: binary logits and positive-class scores per query,
// plus head-averaged cross-attention of every layer for explanation.
template <class S>
struct PredictionBundle {
  Mat<S> logits;                  // Q x 2
  Vec<S> scores;                  // Q, positive-class probability
  std::vector<Mat<S>> attention;  // per layer, Q x (h*w), rows sum to 1
};

template <class S>
struct QueryHead {
  std::vector<DecoderLayer<S>> layers;
  nn::Linear<S> head;   // d -> 2 shared across queries
  nn::Linear<S> head1;  // optional first stage of the two-layer head variant
  QueryHeadConfig cfg;

  QueryHead() = default;

  QueryHead(const QueryHeadConfig& config, Rng& rng) : cfg(config) {
    if (config.d % config.heads != 0) throw ShapeError("query head: d must be divisible by heads");
    if (config.layers < 1) throw ParameterError("query head: needs at least one layer");
    for (int l = 0; l < config.layers; ++l) layers.emplace_back(config, rng);
    if (config.two_layer_head)
      head1 = nn::Linear<S>(config.d, config.d, rng, 1.0 / std::sqrt(static_cast<double>(config.d)));
    head = nn::Linear<S>(config.d, 2, rng, 1.0 / std::sqrt(static_cast<double>(config.d)));
  }

  struct Cache {
    std::vector<typename DecoderLayer<S>::Cache> lc;
    Mat<S> x_final, hh1, hh1g;
    int B = 0, Q = 0, T = 0;
  };

  // queries_tiled: (B*Q) x d (the same query block repeated per item during
  // training); tokens: (B*T) x d. Returns logits (B*Q) x 2.
  Mat<S> forward(const Mat<S>& queries_tiled, const Mat<S>& tokens, int B, Cache& c) const {
    if (queries_tiled.cols() != tokens.cols() || static_cast<int>(queries_tiled.cols()) != cfg.d)
      throw ShapeError("query head: query/token width mismatch");
    c.B = B;
    c.Q = static_cast<int>(queries_tiled.rows()) / B;
    c.T = static_cast<int>(tokens.rows()) / B;
    c.lc.resize(layers.size());
    Mat<S> x = queries_tiled;
    for (std::size_t l = 0; l < layers.size(); ++l) x = layers[l].forward(x, tokens, B, c.lc[l]);
    c.x_final = x;
    if (!cfg.two_layer_head) return head.forward(x);
    c.hh1 = head1.forward(x);
    c.hh1g = c.hh1.unaryExpr([](S v) { return nn::gelu(v); });
    return head.forward(c.hh1g);
  }

  // Accumulates gradients into gqueries_tiled and gtokens (both pre-sized).
  void backward(const Cache& c, const Mat<S>& tokens, const Mat<S>& glogits,
                Mat<S>& gqueries_tiled, Mat<S>& gtokens) {
    Mat<S> gx;
    if (!cfg.two_layer_head) {
      gx = Mat<S>::Zero(c.x_final.rows(), c.x_final.cols());
      head.backward(c.x_final, glogits, &gx);
    } else {
      Mat<S> gh1g = Mat<S>::Zero(c.hh1g.rows(), c.hh1g.cols());
      head.backward(c.hh1g, glogits, &gh1g);
      Mat<S> gh1 = gh1g.cwiseProduct(c.hh1.unaryExpr([](S v) { return nn::gelu_grad(v); }));
      gx = Mat<S>::Zero(c.x_final.rows(), c.x_final.cols());
      head1.backward(c.x_final, gh1, &gx);
    }
    for (std::size_t l = layers.size(); l-- > 0;)
      gx = layers[l].backward(c.lc[l], tokens, gx, gtokens);
    gqueries_tiled += gx;
  }

  // Single-image decode with attention export. scores[i] is the literal
  // two-way softmax exp(l1) / (exp(l0) + exp(l1)).
  PredictionBundle<S> decode(const Mat<S>& queries, const Mat<S>& tokens) const {
    Cache c;
    PredictionBundle<S> out;
    out.logits = forward(queries, tokens, 1, c);
    out.scores.resize(out.logits.rows());
    for (Eigen::Index i = 0; i < out.logits.rows(); ++i) {
      S e0 = std::exp(out.logits(i, 0)), e1 = std::exp(out.logits(i, 1));
      out.scores(i) = e1 / (e0 + e1);
    }
    for (std::size_t l = 0; l < layers.size(); ++l)
      out.attention.push_back(layers[l].cross_attn.head_mean_attention(c.lc[l].c_cross, 0));
    return out;
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    for (std::size_t l = 0; l < layers.size(); ++l)
      layers[l].collect(out, prefix + ".layer" + std::to_string(l));
    if (cfg.two_layer_head) head1.collect(out, prefix + ".head1");
    head.collect(out, prefix + ".head");
  }
};

// Mean over the per-layer attention rows of one class, reshaped to the token
// grid. The mean of row-stochastic rows is itself a distribution over cells.
template <class S>
Mat<S> attention_heatmap(const PredictionBundle<S>& bundle, int class_index, int h, int w) {
  if (bundle.attention.empty()) throw ParameterError("attention_heatmap: bundle has no attention");
  if (class_index < 0 || class_index >= static_cast<int>(bundle.logits.rows()))
    throw ParameterError("attention_heatmap: class index out of range");
  const Eigen::Index cells = bundle.attention.front().cols();
  if (static_cast<Eigen::Index>(h) * w != cells)
    throw ShapeError("attention_heatmap: grid does not match token count");
  Vec<S> mean = Vec<S>::Zero(cells);
  for (const auto& layer : bundle.attention) mean += layer.row(class_index).transpose();
  mean /= static_cast<S>(bundle.attention.size());
  Mat<S> heat(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) heat(r, c) = mean(static_cast<Eigen::Index>(r) * w + c);
  return heat;
}

}  // namespace kdiag::query
