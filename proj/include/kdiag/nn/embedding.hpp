#pragma once

#include "kdiag/nn/params.hpp"

namespace kdiag::nn {

template <class S>
struct Embedding {
  Mat<S> table;  // vocab x d
  Mat<S> gtable;

  Embedding() = default;

  Embedding(Eigen::Index vocab, Eigen::Index d, Rng& rng)
      : table(gaussian_matrix<S>(rng, vocab, d, 1.0 / std::sqrt(static_cast<double>(d)))),
        gtable(Mat<S>::Zero(vocab, d)) {}

  Mat<S> forward(const std::vector<int>& ids) const {
    Mat<S> y(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    return y;
  }

  void backward(const std::vector<int>& ids, const Mat<S>& gy) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      gtable.row(ids[i]) += gy.row(static_cast<Eigen::Index>(i));
  }

  void collect(ParamList<S>& out, const std::string& prefix) {
    out.push_back({prefix + ".table", &table, &gtable});
  }
};

}  // namespace kdiag::nn
