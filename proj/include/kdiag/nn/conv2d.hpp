#pragma once

#include "kdiag/nn/params.hpp"

namespace kdiag::nn {

// 3x3 convolution, padding 1, configurable stride. Feature maps are stored
// position-major: a map of h x w with c channels is a (h*w) x c matrix whose
// row index is r*w + c. This makes the final feature map directly usable as
// the visual token matrix.
template <class S>
struct Conv2d {
  Mat<S> W;   // (in_ch*9) x out_ch
  Mat<S> b;   // 1 x out_ch
  Mat<S> gW;
  Mat<S> gb;
  int in_ch = 0, out_ch = 0, stride = 1;

  Conv2d() = default;

  Conv2d(int in_channels, int out_channels, int stride_, Rng& rng)
      : in_ch(in_channels), out_ch(out_channels), stride(stride_) {
    double fan_in = static_cast<double>(in_ch) * 9.0;
    W = gaussian_matrix<S>(rng, static_cast<Eigen::Index>(in_ch) * 9, out_ch, std::sqrt(2.0 / fan_in));
    b = Mat<S>::Zero(1, out_ch);
    gW = Mat<S>::Zero(W.rows(), W.cols());
    gb = Mat<S>::Zero(1, out_ch);
  }

  static int out_dim(int in, int stride) { return (in - 1) / stride + 1; }

  // x: (B*in_h*in_w) x in_ch stacked batch. Fills cols (B*out_h*out_w) x (in_ch*9).
  void im2col(const Mat<S>& x, int B, int in_h, int in_w, Mat<S>& cols) const {
    const int oh = out_dim(in_h, stride), ow = out_dim(in_w, stride);
    cols.setZero(static_cast<Eigen::Index>(B) * oh * ow, static_cast<Eigen::Index>(in_ch) * 9);
    for (int n = 0; n < B; ++n) {
      const Eigen::Index xoff = static_cast<Eigen::Index>(n) * in_h * in_w;
      const Eigen::Index coff = static_cast<Eigen::Index>(n) * oh * ow;
      for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
          const Eigen::Index row = coff + static_cast<Eigen::Index>(r) * ow + c;
          for (int dy = 0; dy < 3; ++dy) {
            const int ri = r * stride + dy - 1;
            if (ri < 0 || ri >= in_h) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int ci = c * stride + dx - 1;
              if (ci < 0 || ci >= in_w) continue;
              cols.block(row, (static_cast<Eigen::Index>(dy) * 3 + dx) * in_ch, 1, in_ch) =
                  x.block(xoff + static_cast<Eigen::Index>(ri) * in_w + ci, 0, 1, in_ch);
            }
          }
        }
      }
    }
  }

  Mat<S> forward(const Mat<S>& x, int B, int in_h, int in_w, Mat<S>& cols_cache) const {
    im2col(x, B, in_h, in_w, cols_cache);
    Mat<S> y = cols_cache * W;
    y.rowwise() += b.row(0);
    return y;
  }

  // Accumulates gW/gb; scatters the input gradient into gx when non-null.
  void backward(const Mat<S>& cols_cache, const Mat<S>& gy, int B, int in_h, int in_w, Mat<S>* gx) {
    gW.noalias() += cols_cache.transpose() * gy;
    gb.row(0) += gy.colwise().sum();
    if (!gx) return;
    Mat<S> gcols = gy * W.transpose();
    const int oh = out_dim(in_h, stride), ow = out_dim(in_w, stride);
    for (int n = 0; n < B; ++n) {
      const Eigen::Index xoff = static_cast<Eigen::Index>(n) * in_h * in_w;
      const Eigen::Index coff = static_cast<Eigen::Index>(n) * oh * ow;
      for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
          const Eigen::Index row = coff + static_cast<Eigen::Index>(r) * ow + c;
          for (int dy = 0; dy < 3; ++dy) {
            const int ri = r * stride + dy - 1;
            if (ri < 0 || ri >= in_h) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int ci = c * stride + dx - 1;
              if (ci < 0 || ci >= in_w) continue;
              gx->block(xoff + static_cast<Eigen::Index>(ri) * in_w + ci, 0, 1, in_ch) +=
                  gcols.block(row, (static_cast<Eigen::Index>(dy) * 3 + dx) * in_ch, 1, in_ch);
            }
          }
        }
      }
    }
  }

  void collect(ParamList<S>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, &gW});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

}  // namespace kdiag::nn
