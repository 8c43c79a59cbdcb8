#include <doctest.h>

#include <cmath>
#include <vector>

#include "kdiag/visual.hpp"

#include "test_util.hpp"

using namespace kdiag;
using visual::BackboneConfig;
using visual::positional_encoding;
using visual::VisualBackbone;

namespace {

MatD random_image(std::uint64_t seed, int n) {
  Rng rng(seed);
  MatD img(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) img(r, c) = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("backbone: a 32x32 image maps to an 8x8 grid of d-wide tokens") {
  Rng rng(41);
  VisualBackbone<double> bb(BackboneConfig{8, 12, 16}, rng);
  MatD img = random_image(1, 32);
  VisualBackbone<double>::Cache c;
  MatD tokens = bb.forward({img, img}, c, true);
  CHECK(c.h == 8);
  CHECK(c.w == 8);
  CHECK(VisualBackbone<double>::kStride == 4);
  REQUIRE(tokens.rows() == 2 * 64);
  REQUIRE(tokens.cols() == 16);
  // Identical images give identical token blocks.
  CHECK(tokens.topRows(64) == tokens.bottomRows(64));
}

TEST_CASE("backbone: deterministic, and distinct images produce distinct maps") {
  Rng r1(42), r2(42);
  VisualBackbone<double> a(BackboneConfig{4, 6, 8}, r1);
  VisualBackbone<double> b(BackboneConfig{4, 6, 8}, r2);
  MatD img = random_image(2, 16);
  CHECK(a.encode_image(img) == b.encode_image(img));

  MatD zero = MatD::Zero(16, 16);
  MatD one = MatD::Ones(16, 16);
  CHECK(a.encode_image(zero) != a.encode_image(one));
}

TEST_CASE("backbone: tokens without positions are the feature map itself") {
  Rng rng(43);
  VisualBackbone<double> bb(BackboneConfig{4, 6, 8}, rng);
  MatD img = random_image(3, 16);
  VisualBackbone<double>::Cache c;
  MatD tokens = bb.forward({img}, c, false);
  CHECK(tokens == bb.encode_image(img));
  CHECK(tokens.rows() == c.h * c.w);
}

TEST_CASE("backbone: the added position code matches the documented sinusoid") {
  Rng rng(44);
  VisualBackbone<double> bb(BackboneConfig{4, 6, 8}, rng);
  MatD img = random_image(4, 16);  // 4x4 token grid at d=8
  VisualBackbone<double>::Cache c;
  MatD with = bb.forward({img, img}, c, true);
  MatD without = bb.forward({img, img}, c, false);
  MatD diff = with - without;

  // Independent closed form: channels [0, d/2) encode the row index, the
  // rest the column index; pair i uses frequency 10000^(-2*(i/2)/(d/2)).
  const int h = c.h, w = c.w, d = 8, half = 4;
  for (int item = 0; item < 2; ++item)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        Eigen::Index row = static_cast<Eigen::Index>(item) * h * w + r * w + col;
        for (int i = 0; i < half; ++i) {
          double freq = std::pow(10000.0, -2.0 * (i / 2) / half);
          double row_angle = r * freq;
          double col_angle = col * freq;
          double expect_row = (i % 2 == 0) ? std::sin(row_angle) : std::cos(row_angle);
          double expect_col = (i % 2 == 0) ? std::sin(col_angle) : std::cos(col_angle);
          CHECK(diff(row, i) == doctest::Approx(expect_row).epsilon(1e-12));
          CHECK(diff(row, half + i) == doctest::Approx(expect_col).epsilon(1e-12));
        }
      }
}

TEST_CASE("backbone: pixel and parameter gradients match central differences") {
  Rng rng(45);
  VisualBackbone<double> bb(BackboneConfig{4, 6, 8}, rng);
  MatD img = random_image(5, 8);  // 2x2 token grid
  MatD R = gaussian_matrix<double>(rng, 4, 8, 1.0);
  auto loss = [&] {
    VisualBackbone<double>::Cache c;
    return (bb.forward({img}, c, true).array() * R.array()).sum();
  };

  VisualBackbone<double>::Cache c;
  bb.forward({img}, c, true);
  MatD gpix = MatD::Zero(64, 1);
  bb.backward(c, R, &gpix);
  CHECK(!gpix.isZero(0.0));

  MatD numeric = test::numeric_grad(img, loss);
  MatD analytic(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int col = 0; col < 8; ++col) analytic(r, col) = gpix(r * 8 + col, 0);
  KDIAG_CHECK_GRAD(analytic, numeric);

  KDIAG_CHECK_GRAD(bb.conv1.gW, test::numeric_grad(bb.conv1.W, loss));
  KDIAG_CHECK_GRAD(bb.conv1.gb, test::numeric_grad(bb.conv1.b, loss));
  KDIAG_CHECK_GRAD(bb.conv2.gW, test::numeric_grad(bb.conv2.W, loss));
  KDIAG_CHECK_GRAD(bb.conv3.gb, test::numeric_grad(bb.conv3.b, loss));
}

TEST_CASE("backbone: input guards") {
  Rng rng(46);
  VisualBackbone<double> bb(BackboneConfig{4, 6, 8}, rng);
  VisualBackbone<double>::Cache c;
  CHECK_THROWS_AS(bb.forward({}, c), InputError);
  CHECK_THROWS_AS(bb.forward({MatD::Zero(4, 4)}, c), InputError);
  CHECK_THROWS_AS(bb.forward({MatD::Zero(16, 16), MatD::Zero(8, 8)}, c), ShapeError);
  CHECK_THROWS_AS((VisualBackbone<double>(BackboneConfig{0, 6, 8}, rng)), ParameterError);
}

TEST_CASE("positional_encoding: guards and value range") {
  CHECK_THROWS_AS(positional_encoding<double>(0, 4, 8), ParameterError);
  CHECK_THROWS_AS(positional_encoding<double>(4, 4, 6), ParameterError);
  MatD pe = positional_encoding<double>(3, 5, 8);
  REQUIRE(pe.rows() == 15);
  CHECK(pe.minCoeff() >= -1.0);
  CHECK(pe.maxCoeff() <= 1.0);
  // Cell (0,0) has angle zero everywhere: sin channels 0, cos channels 1.
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
}
