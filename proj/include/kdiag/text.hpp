#pragma once

#include "kdiag/nn/adamw.hpp"
#include "kdiag/nn/attention.hpp"
#include "kdiag/nn/embedding.hpp"
#include "kdiag/nn/layernorm.hpp"
#include "kdiag/nn/linear.hpp"
#include "kdiag/nn/ops.hpp"

#include <string>
#include <vector>

namespace kdiag::text {

// Lowercasing tokenizer over alphanumeric runs with a hashed vocabulary:
// token id = fnv1a64(lowercased token) % vocab_size. No OOV symbol; hash
// collisions are accepted and deterministic.
struct Tokenizer {
  int vocab_size = 4096;

  std::vector<int> tokenize(const std::string& text, int max_seq_len) const;

  // Identifies the tokenizer configuration in checkpoint manifests.
  std::uint64_t spec_hash() const {
    std::string spec = "alnum-lower/fnv1a64/" + std::to_string(vocab_size);
    return fnv1a64(spec);
  }
};

// One pre-norm self-attention encoder block: x + attn(ln1(x)), then
// x + ff2(gelu(ff1(ln2(x)))).
template <class S>
struct EncoderBlock {
  nn::LayerNorm<S> ln1, ln2;
  nn::MultiHeadAttention<S> attn;
  nn::Linear<S> ff1, ff2;

  EncoderBlock() = default;

  EncoderBlock(int d, int heads, int ffn_width, Rng& rng)
      : ln1(d),
        ln2(d),
        attn(d, heads, rng),
        ff1(d, ffn_width, rng, 1.0 / std::sqrt(static_cast<double>(d))),
        ff2(ffn_width, d, rng, 1.0 / std::sqrt(static_cast<double>(ffn_width))) {}

  struct Cache {
    Mat<S> x_in, n1, x_mid, n2, h1, h1g;
    nn::LayerNormCache<S> c_ln1, c_ln2;
    nn::AttentionCache<S> c_attn;
  };

  Mat<S> forward(const Mat<S>& x, int B, Cache& c) const {
    c.x_in = x;
    c.n1 = ln1.forward(x, c.c_ln1);
    c.x_mid = x + attn.forward(c.n1, c.n1, B, c.c_attn);
    c.n2 = ln2.forward(c.x_mid, c.c_ln2);
    c.h1 = ff1.forward(c.n2);
    c.h1g = c.h1.unaryExpr([](S v) { return nn::gelu(v); });
    return c.x_mid + ff2.forward(c.h1g);
  }

  // Returns the gradient w.r.t. the block input; parameter grads accumulate.
  Mat<S> backward(const Cache& c, const Mat<S>& gout) {
    Mat<S> gh1g = Mat<S>::Zero(c.h1g.rows(), c.h1g.cols());
    ff2.backward(c.h1g, gout, &gh1g);
    Mat<S> gh1 = gh1g.cwiseProduct(c.h1.unaryExpr([](S v) { return nn::gelu_grad(v); }));
    Mat<S> gn2 = Mat<S>::Zero(c.n2.rows(), c.n2.cols());
    ff1.backward(c.n2, gh1, &gn2);
    Mat<S> gx_mid = gout;
    ln2.backward(c.c_ln2, gn2, gx_mid);
    Mat<S> gn1 = Mat<S>::Zero(c.n1.rows(), c.n1.cols());
    attn.backward(c.n1, c.n1, c.c_attn, gx_mid, gn1, gn1);
    Mat<S> gx = gx_mid;
    ln1.backward(c.c_ln1, gn1, gx);
    return gx;
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    ln1.collect(out, prefix + ".ln1");
    attn.collect(out, prefix + ".attn");
    ln2.collect(out, prefix + ".ln2");
    ff1.collect(out, prefix + ".ff1");
    ff2.collect(out, prefix + ".ff2");
  }
};

// From-scratch text encoder: hashed token embeddings, two pre-norm
// self-attention blocks, mean pooling over positions, linear projection to d.
// There are no positional encodings, so a text embeds as a bag of tokens;
// the generated definitions are unordered attribute enumerations, which this
// matches. Texts of equal token count are stacked into one batched pass, so
// results are independent of how a call groups its inputs.
template <class S>
struct TextEncoderModel {
  Tokenizer tokenizer;
  int d = 0;
  int heads = 0;
  int ffn_width = 0;
  int max_seq_len = 0;
  nn::Embedding<S> embed;
  std::vector<EncoderBlock<S>> blocks;
  nn::Linear<S> proj;

  TextEncoderModel() = default;

  TextEncoderModel(int d_, int heads_, int max_seq_len_, std::uint64_t seed) {
    if (d_ < 1 || heads_ < 1 || max_seq_len_ < 1)
      throw ParameterError("text encoder: dimensions must be positive");
    d = d_;
    heads = heads_;
    ffn_width = 4 * d_;
    max_seq_len = max_seq_len_;
    Rng rng(mix_seed(seed, 0x7E07));
    embed = nn::Embedding<S>(tokenizer.vocab_size, d_, rng);
    blocks.emplace_back(d_, heads_, ffn_width, rng);
    blocks.emplace_back(d_, heads_, ffn_width, rng);
    proj = nn::Linear<S>(d_, d_, rng, 1.0 / std::sqrt(static_cast<double>(d_)));
  }

  struct GroupCache {
    std::vector<int> item_index;  // output rows served by this group
    std::vector<int> ids;         // concatenated token ids, B*T entries
    int B = 0, T = 0;
    Mat<S> x0;      // embeddings, (B*T) x d
    std::vector<typename EncoderBlock<S>::Cache> bc;
    Mat<S> x_out;   // last block output
    Mat<S> pooled;  // B x d
  };

  struct Cache {
    std::vector<GroupCache> groups;
    Eigen::Index n = 0;
  };

  // Row i is the embedding of texts[i]. Pass a cache to enable backward().
  Mat<S> embed_texts(const std::vector<std::string>& texts, Cache* cache = nullptr) const {
    if (texts.empty()) throw InputError("embed_texts: empty text list");
    std::vector<std::vector<int>> ids(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      ids[i] = tokenizer.tokenize(texts[i], max_seq_len);
      if (ids[i].empty()) throw InputError("embed_texts: text tokenizes to zero tokens: '" + texts[i] + "'");
    }

    // Group items by token count; equal-length items batch without padding.
    std::vector<GroupCache> groups;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int T = static_cast<int>(ids[i].size());
      GroupCache* g = nullptr;
      for (auto& cand : groups)
        if (cand.T == T) g = &cand;
      if (!g) {
        groups.emplace_back();
        g = &groups.back();
        g->T = T;
      }
      g->item_index.push_back(static_cast<int>(i));
      g->ids.insert(g->ids.end(), ids[i].begin(), ids[i].end());
      ++g->B;
    }

    Mat<S> out(static_cast<Eigen::Index>(texts.size()), d);
    for (auto& g : groups) {
      g.x0 = embed.forward(g.ids);
      g.bc.resize(blocks.size());
      Mat<S> x = g.x0;
      for (std::size_t l = 0; l < blocks.size(); ++l) x = blocks[l].forward(x, g.B, g.bc[l]);
      g.x_out = x;
      g.pooled.resize(g.B, d);
      for (int b = 0; b < g.B; ++b)
        g.pooled.row(b) = x.middleRows(static_cast<Eigen::Index>(b) * g.T, g.T).colwise().mean();
      Mat<S> rows = proj.forward(g.pooled);
      for (int b = 0; b < g.B; ++b) out.row(g.item_index[static_cast<std::size_t>(b)]) = rows.row(b);
    }
    if (cache) {
      cache->groups = std::move(groups);
      cache->n = static_cast<Eigen::Index>(texts.size());
    }
    return out;
  }

  // gout: one gradient row per input text, matching embed_texts output order.
  void backward(const Cache& cache, const Mat<S>& gout) {
    for (const auto& g : cache.groups) {
      Mat<S> grows(g.B, d);
      for (int b = 0; b < g.B; ++b) grows.row(b) = gout.row(g.item_index[static_cast<std::size_t>(b)]);
      Mat<S> gpooled = Mat<S>::Zero(g.B, d);
      proj.backward(g.pooled, grows, &gpooled);
      Mat<S> gx = Mat<S>::Zero(static_cast<Eigen::Index>(g.B) * g.T, d);
      const S inv_t = S(1) / static_cast<S>(g.T);
      for (int b = 0; b < g.B; ++b)
        gx.middleRows(static_cast<Eigen::Index>(b) * g.T, g.T).rowwise() += gpooled.row(b) * inv_t;
      for (std::size_t l = blocks.size(); l-- > 0;) gx = blocks[l].backward(g.bc[l], gx);
      embed.backward(g.ids, gx);
    }
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    embed.collect(out, prefix + ".embed");
    for (std::size_t l = 0; l < blocks.size(); ++l)
      blocks[l].collect(out, prefix + ".block" + std::to_string(l));
    proj.collect(out, prefix + ".proj");
  }
};

}  // namespace kdiag::text
