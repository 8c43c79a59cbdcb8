#include <doctest.h>

#include <vector>

#include "kdiag/nn/adamw.hpp"
#include "kdiag/nn/attention.hpp"
#include "kdiag/nn/conv2d.hpp"
#include "kdiag/nn/embedding.hpp"
#include "kdiag/nn/layernorm.hpp"
#include "kdiag/nn/linear.hpp"
#include "kdiag/nn/ops.hpp"

#include "test_util.hpp"

using namespace kdiag;

TEST_CASE("linear: analytic gradients match central differences") {
  Rng rng(101);
  nn::Linear<double> lin(5, 4, rng, 0.5);
  MatD x = gaussian_matrix<double>(rng, 3, 5, 1.0);
  MatD R = gaussian_matrix<double>(rng, 3, 4, 1.0);
  auto loss = [&] { return (lin.forward(x).array() * R.array()).sum(); };

  MatD gx = MatD::Zero(3, 5);
  lin.backward(x, R, &gx);
  KDIAG_CHECK_GRAD(gx, test::numeric_grad(x, loss));
  KDIAG_CHECK_GRAD(lin.gW, test::numeric_grad(lin.W, loss));
  KDIAG_CHECK_GRAD(lin.gb, test::numeric_grad(lin.b, loss));
}

TEST_CASE("linear: backward accumulates into existing gradients") {
  Rng rng(111);
  nn::Linear<double> lin(3, 2, rng, 1.0);
  MatD x = gaussian_matrix<double>(rng, 2, 3, 1.0);
  MatD gy = gaussian_matrix<double>(rng, 2, 2, 1.0);
  lin.backward(x, gy, nullptr);
  MatD once = lin.gW;
  lin.backward(x, gy, nullptr);
  CHECK(lin.gW.isApprox(2.0 * once, 1e-12));
}

TEST_CASE("layernorm: gradients, including gamma and beta") {
  Rng rng(102);
  nn::LayerNorm<double> ln(6);
  ln.gamma = gaussian_matrix<double>(rng, 1, 6, 1.0);
  ln.beta = gaussian_matrix<double>(rng, 1, 6, 1.0);
  MatD x = gaussian_matrix<double>(rng, 4, 6, 1.0);
  MatD R = gaussian_matrix<double>(rng, 4, 6, 1.0);
  auto loss = [&] {
    nn::LayerNormCache<double> c;
    return (ln.forward(x, c).array() * R.array()).sum();
  };

  nn::LayerNormCache<double> c;
  ln.forward(x, c);
  MatD gx = MatD::Zero(4, 6);
  ln.backward(c, R, gx);
  KDIAG_CHECK_GRAD(gx, test::numeric_grad(x, loss));
  KDIAG_CHECK_GRAD(ln.ggamma, test::numeric_grad(ln.gamma, loss));
  KDIAG_CHECK_GRAD(ln.gbeta, test::numeric_grad(ln.beta, loss));

  // The input-gradient argument is an accumulator, not an output slot.
  MatD gx2 = gx;
  ln.backward(c, R, gx2);
  CHECK(gx2.isApprox(2.0 * gx, 1e-12));
}

TEST_CASE("attention: cross-attention gradients for inputs and projections") {
  Rng rng(103);
  nn::MultiHeadAttention<double> att(8, 2, rng);
  const int B = 2, Tq = 3, Tkv = 4;
  MatD xq = gaussian_matrix<double>(rng, B * Tq, 8, 1.0);
  MatD xkv = gaussian_matrix<double>(rng, B * Tkv, 8, 1.0);
  MatD R = gaussian_matrix<double>(rng, B * Tq, 8, 1.0);
  auto loss = [&] {
    nn::AttentionCache<double> c;
    return (att.forward(xq, xkv, B, c).array() * R.array()).sum();
  };

  nn::AttentionCache<double> c;
  att.forward(xq, xkv, B, c);
  MatD gxq = MatD::Zero(B * Tq, 8), gxkv = MatD::Zero(B * Tkv, 8);
  att.backward(xq, xkv, c, R, gxq, gxkv);
  KDIAG_CHECK_GRAD(gxq, test::numeric_grad(xq, loss));
  KDIAG_CHECK_GRAD(gxkv, test::numeric_grad(xkv, loss));
  KDIAG_CHECK_GRAD(att.wq.gW, test::numeric_grad(att.wq.W, loss));
  KDIAG_CHECK_GRAD(att.wk.gW, test::numeric_grad(att.wk.W, loss));
  KDIAG_CHECK_GRAD(att.wv.gW, test::numeric_grad(att.wv.W, loss));
  KDIAG_CHECK_GRAD(att.wo.gW, test::numeric_grad(att.wo.W, loss));
  KDIAG_CHECK_GRAD(att.wo.gb, test::numeric_grad(att.wo.b, loss));
}

TEST_CASE("attention: self-attention with a shared input-gradient accumulator") {
  Rng rng(104);
  nn::MultiHeadAttention<double> att(8, 2, rng);
  const int B = 2, T = 3;
  MatD x = gaussian_matrix<double>(rng, B * T, 8, 1.0);
  MatD R = gaussian_matrix<double>(rng, B * T, 8, 1.0);
  auto loss = [&] {
    nn::AttentionCache<double> c;
    return (att.forward(x, x, B, c).array() * R.array()).sum();
  };

  nn::AttentionCache<double> c;
  att.forward(x, x, B, c);
  MatD gx = MatD::Zero(B * T, 8);
  att.backward(x, x, c, R, gx, gx);
  KDIAG_CHECK_GRAD(gx, test::numeric_grad(x, loss));
}

TEST_CASE("attention: head-averaged rows are stochastic") {
  Rng rng(109);
  nn::MultiHeadAttention<double> att(8, 4, rng);
  MatD x = gaussian_matrix<double>(rng, 5, 8, 1.0);
  nn::AttentionCache<double> c;
  att.forward(x, x, 1, c);
  MatD m = att.head_mean_attention(c, 0);
  REQUIRE(m.rows() == 5);
  REQUIRE(m.cols() == 5);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    CHECK(m.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(nn::MultiHeadAttention<double>(9, 2, rng), ShapeError);
}

TEST_CASE("conv2d: gradients at stride 1 and stride 2") {
  for (int stride : {1, 2}) {
    CAPTURE(stride);
    Rng rng(105 + stride);
    nn::Conv2d<double> conv(2, 3, stride, rng);
    const int B = 2, H = 5, W = 4;
    MatD x = gaussian_matrix<double>(rng, B * H * W, 2, 1.0);
    const int oh = nn::Conv2d<double>::out_dim(H, stride);
    const int ow = nn::Conv2d<double>::out_dim(W, stride);
    MatD R = gaussian_matrix<double>(rng, B * oh * ow, 3, 1.0);
    auto loss = [&] {
      MatD cols;
      return (conv.forward(x, B, H, W, cols).array() * R.array()).sum();
    };

    MatD cols;
    conv.forward(x, B, H, W, cols);
    MatD gx = MatD::Zero(B * H * W, 2);
    conv.backward(cols, R, B, H, W, &gx);
    KDIAG_CHECK_GRAD(gx, test::numeric_grad(x, loss));
    KDIAG_CHECK_GRAD(conv.gW, test::numeric_grad(conv.W, loss));
    KDIAG_CHECK_GRAD(conv.gb, test::numeric_grad(conv.b, loss));
  }
}

TEST_CASE("conv2d: output grid size follows the stride") {
  CHECK(nn::Conv2d<float>::out_dim(32, 4) == 8);
  CHECK(nn::Conv2d<float>::out_dim(5, 2) == 3);
  CHECK(nn::Conv2d<float>::out_dim(5, 1) == 5);
}

TEST_CASE("embedding: lookup rows and duplicate-id accumulation") {
  Rng rng(106);
  nn::Embedding<double> emb(10, 4, rng);
  std::vector<int> ids{3, 7, 3};
  MatD y = emb.forward(ids);
  REQUIRE(y.rows() == 3);
  CHECK(y.row(0) == emb.table.row(3));
  CHECK(y.row(1) == emb.table.row(7));
  CHECK(y.row(2) == emb.table.row(3));

  MatD gy = MatD::Ones(3, 4);
  emb.backward(ids, gy);
  CHECK(emb.gtable.row(3).sum() == doctest::Approx(8.0));
  CHECK(emb.gtable.row(7).sum() == doctest::Approx(4.0));
  CHECK(emb.gtable.row(0).isZero(0.0));
}

TEST_CASE("softmax_rows: normalization and backward") {
  Rng rng(107);
  MatD z = gaussian_matrix<double>(rng, 5, 7, 2.0);
  MatD R = gaussian_matrix<double>(rng, 5, 7, 1.0);
  auto loss = [&] {
    MatD p = z;
    nn::softmax_rows(p);
    return (p.array() * R.array()).sum();
  };

  MatD p = z;
  nn::softmax_rows(p);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.minCoeff() > 0.0);
  MatD gz = nn::softmax_rows_backward(p, R);
  KDIAG_CHECK_GRAD(gz, test::numeric_grad(z, loss));
}

TEST_CASE("gelu: exact-erf values and derivative") {
  CHECK(nn::gelu(0.0) == 0.0);
  CHECK(nn::gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(nn::gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-9));
  for (double x : {-2.3, -0.7, 0.0, 0.4, 1.9}) {
    CAPTURE(x);
    const double h = 1e-5;
    double num = (nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h);
    CHECK(nn::gelu_grad(x) == doctest::Approx(num).epsilon(1e-6));
  }
  MatD x(1, 3);
  x << -1.0, 0.0, 2.0;
  MatD r = nn::relu(x);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 2) == 2.0);
}

TEST_CASE("adamw: first step is signed lr plus decoupled decay") {
  MatD p(1, 3), g(1, 3);
  p << 1.0, -2.0, 0.5;
  g << 0.3, -0.2, 0.0;
  MatD p0 = p;
  nn::ParamList<double> params{{"p", &p, &g}};
  nn::AdamW<double> opt(params);
  opt.step(params, 1e-3);
  // After one step the bias-corrected moments reduce to g and g*g, so the
  // adaptive term is g / (|g| + eps), i.e. the sign of the gradient.
  CHECK(p(0, 0) == doctest::Approx(p0(0, 0) - 1e-3 * (1.0 + 0.01 * p0(0, 0))).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(p0(0, 1) - 1e-3 * (-1.0 + 0.01 * p0(0, 1))).epsilon(1e-6));
  // A zero gradient leaves only the decoupled weight decay.
  CHECK(p(0, 2) == doctest::Approx(p0(0, 2) * (1.0 - 1e-3 * 0.01)).epsilon(1e-9));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("lr_at_step: warmup endpoints, midpoint and guards") {
  CHECK(nn::lr_at_step(0, 100, 1e-5, 1e-4) == 1e-5);
  CHECK(nn::lr_at_step(100, 100, 1e-5, 1e-4) == 1e-4);
  CHECK(nn::lr_at_step(50, 100, 1e-5, 1e-4) == doctest::Approx(5.5e-5).epsilon(1e-12));
  CHECK(nn::lr_at_step(250, 100, 1e-5, 1e-4) == 1e-4);
  // No jump at the warmup boundary.
  double before = nn::lr_at_step(99, 100, 1e-5, 1e-4);
  CHECK(std::abs(before - 1e-4) < 2e-6);
  CHECK(nn::lr_at_step(0, 0, 1e-5, 1e-4) == 1e-4);
  CHECK_THROWS_AS(nn::lr_at_step(-1, 100, 1e-5, 1e-4), ParameterError);
}

TEST_CASE("param_hash: stable across calls, sensitive to one value") {
  Rng rng(108);
  MatD a = gaussian_matrix<double>(rng, 3, 3, 1.0);
  MatD ga = MatD::Zero(3, 3);
  nn::ParamList<double> params{{"a", &a, &ga}};
  auto h0 = nn::param_hash(params);
  CHECK(h0 == nn::param_hash(params));
  a(1, 2) += 1e-3f;
  CHECK(nn::param_hash(params) != h0);
  CHECK(nn::param_count(params) == 9);
  ga.setOnes();
  nn::zero_grads(params);
  CHECK(ga.isZero(0.0));
}
