#pragma once

#include "kdiag/nn/linear.hpp"
#include "kdiag/nn/ops.hpp"

namespace kdiag::prompt {

// Learnable prompt module: a bank of n_prompts vectors plus a small MLP that
// maps each query embedding to a softmax distribution over the bank. The
// adapted embedding is the distribution-weighted mixture of bank rows, so it
// always lies in the bank's convex hull. The final MLP layer starts at zero,
// which makes every initial mixture the uniform bank mean.
template <class S>
struct PromptAdapter {
  Mat<S> bank;   // n_prompts x d
  Mat<S> gbank;
  nn::Linear<S> fc1;  // d -> d, GELU
  nn::Linear<S> fc2;  // d -> n_prompts, zero-initialized
  int n_prompts = 0;
  int d = 0;

  PromptAdapter() = default;

  PromptAdapter(int n_prompts_, int d_, Rng& rng) : n_prompts(n_prompts_), d(d_) {
    if (n_prompts_ < 1) throw ParameterError("prompt adapter: n_prompts must be >= 1");
    if (d_ < 1) throw ParameterError("prompt adapter: d must be >= 1");
    bank = gaussian_matrix<S>(rng, n_prompts_, d_, 1.0 / std::sqrt(static_cast<double>(d_)));
    gbank = Mat<S>::Zero(n_prompts_, d_);
    fc1 = nn::Linear<S>(d_, d_, rng, 1.0 / std::sqrt(static_cast<double>(d_)));
    fc2 = nn::Linear<S>::zero_init(d_, n_prompts_);
  }

  struct Cache {
    Mat<S> T, h1, h1g, weights;
  };

  // Row-stochastic Q x n_prompts mixing weights.
  Mat<S> distribution(const Mat<S>& T, Cache& c) const {
    if (static_cast<int>(T.cols()) != d) throw ShapeError("prompt adapter: query width mismatch");
    c.T = T;
    c.h1 = fc1.forward(T);
    c.h1g = c.h1.unaryExpr([](S v) { return nn::gelu(v); });
    Mat<S> logits = fc2.forward(c.h1g);
    nn::softmax_rows(logits);
    c.weights = logits;
    return c.weights;
  }

  // Adapted queries: distribution(T) * bank, Q x d.
  Mat<S> adapt(const Mat<S>& T, Cache& c) const {
    distribution(T, c);
    return c.weights * bank;
  }

  // Accumulates bank and MLP grads; adds dL/dT into gT when given (the
  // encoder feeding T is frozen in production, so gT is usually null).
  void backward(const Cache& c, const Mat<S>& gout, Mat<S>* gT) {
    Mat<S> gw = gout * bank.transpose();
    gbank.noalias() += c.weights.transpose() * gout;
    Mat<S> glogits = nn::softmax_rows_backward(c.weights, gw);
    Mat<S> gh1g = Mat<S>::Zero(c.h1g.rows(), c.h1g.cols());
    fc2.backward(c.h1g, glogits, &gh1g);
    Mat<S> gh1 = gh1g.cwiseProduct(c.h1.unaryExpr([](S v) { return nn::gelu_grad(v); }));
    fc1.backward(c.T, gh1, gT);
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    out.push_back({prefix + ".bank", &bank, &gbank});
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

}  // namespace kdiag::prompt
