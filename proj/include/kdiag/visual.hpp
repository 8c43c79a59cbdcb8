#pragma once

#include "kdiag/nn/conv2d.hpp"
#include "kdiag/nn/ops.hpp"
#include "kdiag/types.hpp"

namespace kdiag::visual {

// Fixed 2-D sinusoidal position code for an h x w token grid at width d.
// Channels [0, d/2) encode the row index and [d/2, d) the column index; within
// each half, pair i of positions p is
//   code[2i]   = sin(p / 10000^(2i / (d/2)))
//   code[2i+1] = cos(p / 10000^(2i / (d/2))).
// Returned row-major: row r*w + c belongs to grid cell (r, c).
template <class S>
Mat<S> positional_encoding(int h, int w, int d) {
  if (h < 1 || w < 1) throw ParameterError("positional_encoding: empty grid");
  if (d < 4 || d % 4 != 0) throw ParameterError("positional_encoding: d must be a positive multiple of 4");
  const int half = d / 2;
  auto axis_code = [&](int pos, int i) {
    double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(half);
    double angle = pos / std::pow(10000.0, exponent);
    return (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  };
  Mat<S> pe(static_cast<Eigen::Index>(h) * w, d);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      Eigen::Index row = static_cast<Eigen::Index>(r) * w + c;
      for (int i = 0; i < half; ++i) {
        pe(row, i) = static_cast<S>(axis_code(r, i));
        pe(row, half + i) = static_cast<S>(axis_code(c, i));
      }
    }
  return pe;
}

struct BackboneConfig {
  int c1 = 32;
  int c2 = 64;
  int d = 256;  // output channels = global embedding width
};

// Three 3x3 convolution stages with ReLU and no normalization; strides
// 2, 2, 1 give total stride 4. Feature maps are position-major (h*w) x c
// matrices, so the last map is the visual token matrix directly.
template <class S>
struct VisualBackbone {
  nn::Conv2d<S> conv1, conv2, conv3;
  BackboneConfig cfg;

  VisualBackbone() = default;

  VisualBackbone(const BackboneConfig& config, Rng& rng)
      : conv1(1, config.c1, 2, rng),
        conv2(config.c1, config.c2, 2, rng),
        conv3(config.c2, config.d, 1, rng),
        cfg(config) {
    if (config.c1 < 1 || config.c2 < 1 || config.d < 1)
      throw ParameterError("backbone: channel counts must be positive");
  }

  static constexpr int kStride = 4;

  struct Cache {
    int B = 0, H = 0, W = 0;
    int h1 = 0, w1 = 0, h = 0, w = 0;
    Mat<S> x0;                  // (B*H*W) x 1 pixels
    Mat<S> cols1, y1, r1;       // per stage: im2col cache, preactivation, relu
    Mat<S> cols2, y2, r2;
    Mat<S> cols3, y3, r3;
  };

  // Stacks the batch and returns visual tokens (B*h*w) x d. Positional codes
  // are added per item unless add_positions is false.
  Mat<S> forward(const std::vector<MatD>& images, Cache& c, bool add_positions = true) const {
    if (images.empty()) throw InputError("backbone: empty batch");
    const int H = static_cast<int>(images.front().rows());
    const int W = static_cast<int>(images.front().cols());
    if (H < 8 || W < 8) throw InputError("backbone: image smaller than 8x8");
    for (const auto& img : images)
      if (img.rows() != H || img.cols() != W) throw ShapeError("backbone: ragged image batch");

    const int B = static_cast<int>(images.size());
    c.B = B;
    c.H = H;
    c.W = W;
    c.x0.resize(static_cast<Eigen::Index>(B) * H * W, 1);
    for (int b = 0; b < B; ++b)
      for (int r = 0; r < H; ++r)
        for (int col = 0; col < W; ++col)
          c.x0(static_cast<Eigen::Index>(b) * H * W + static_cast<Eigen::Index>(r) * W + col, 0) =
              static_cast<S>(images[static_cast<std::size_t>(b)](r, col));

    c.h1 = nn::Conv2d<S>::out_dim(H, 2);
    c.w1 = nn::Conv2d<S>::out_dim(W, 2);
    c.h = nn::Conv2d<S>::out_dim(c.h1, 2);
    c.w = nn::Conv2d<S>::out_dim(c.w1, 2);

    c.y1 = conv1.forward(c.x0, B, H, W, c.cols1);
    c.r1 = nn::relu(c.y1);
    c.y2 = conv2.forward(c.r1, B, c.h1, c.w1, c.cols2);
    c.r2 = nn::relu(c.y2);
    c.y3 = conv3.forward(c.r2, B, c.h, c.w, c.cols3);
    c.r3 = nn::relu(c.y3);

    Mat<S> tokens = c.r3;
    if (add_positions) {
      Mat<S> pe = positional_encoding<S>(c.h, c.w, cfg.d);
      for (int b = 0; b < B; ++b)
        tokens.middleRows(static_cast<Eigen::Index>(b) * c.h * c.w, c.h * c.w) += pe;
    }
    return tokens;
  }

  // Single-image feature map without positions, (h*w) x d.
  Mat<S> encode_image(const MatD& image) const {
    Cache c;
    return forward({image}, c, false);
  }

  // Accumulates conv grads; adds d(loss)/d(pixels) into gpixels when given
  // ((B*H*W) x 1, used by the finite-difference checks).
  void backward(const Cache& c, const Mat<S>& gtokens, Mat<S>* gpixels = nullptr) {
    Mat<S> gy3 = gtokens.cwiseProduct(
        c.y3.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
    Mat<S> gr2 = Mat<S>::Zero(c.r2.rows(), c.r2.cols());
    conv3.backward(c.cols3, gy3, c.B, c.h, c.w, &gr2);
    Mat<S> gy2 = gr2.cwiseProduct(c.y2.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
    Mat<S> gr1 = Mat<S>::Zero(c.r1.rows(), c.r1.cols());
    conv2.backward(c.cols2, gy2, c.B, c.h1, c.w1, &gr1);
    Mat<S> gy1 = gr1.cwiseProduct(c.y1.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); }));
    conv1.backward(c.cols1, gy1, c.B, c.H, c.W, gpixels);
  }

  void collect(nn::ParamList<S>& out, const std::string& prefix) {
    conv1.collect(out, prefix + ".conv1");
    conv2.collect(out, prefix + ".conv2");
    conv3.collect(out, prefix + ".conv3");
  }
};

}  // namespace kdiag::visual
