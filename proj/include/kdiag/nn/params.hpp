#pragma once

#include "kdiag/common.hpp"

#include <functional>

namespace kdiag::nn {

// A named view over one parameter array and its gradient accumulator.
// Every trainable module registers its parameters through collect_params so
// the optimizer, checkpoints and hashing all see one flat list.
template <class S>
struct ParamRef {
  std::string name;
  Mat<S>* value = nullptr;
  Mat<S>* grad = nullptr;
};

template <class S>
using ParamList = std::vector<ParamRef<S>>;

template <class S>
inline void zero_grads(ParamList<S>& params) {
  for (auto& p : params) p.grad->setZero();
}

template <class S>
inline std::size_t param_count(const ParamList<S>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.value->size());
  return n;
}

// FNV over the float32 serialization of the values; used by freeze tests and
// the inference-only contracts.
template <class S>
inline std::uint64_t param_hash(const ParamList<S>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    for (Eigen::Index i = 0; i < p.value->rows(); ++i)
      for (Eigen::Index j = 0; j < p.value->cols(); ++j) {
        float f = static_cast<float>((*p.value)(i, j));
        h = fnv1a64(&f, sizeof(f), h);
      }
  }
  return h;
}

}  // namespace kdiag::nn
