#pragma once

#include "kdiag/nn/params.hpp"

namespace kdiag::nn {

// Decoupled-weight-decay adaptive moment optimizer. Weight decay is applied
// uniformly to all parameters.
template <class S>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;

  explicit AdamW(const ParamList<S>& params, Options opts = {}) : opts_(opts) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void step(ParamList<S>& params, double lr) {
    ++t_;
    const S b1 = static_cast<S>(opts_.beta1), b2 = static_cast<S>(opts_.beta2);
    const S bc1 = static_cast<S>(1.0 - std::pow(opts_.beta1, static_cast<double>(t_)));
    const S bc2 = static_cast<S>(1.0 - std::pow(opts_.beta2, static_cast<double>(t_)));
    const S eps = static_cast<S>(opts_.eps);
    const S wd = static_cast<S>(opts_.weight_decay);
    const S lrs = static_cast<S>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = *params[i].grad;
      auto& p = *params[i].value;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (S(1) - b2) * g.array().square();
      p.array() -= lrs * ((m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps) + wd * p.array());
    }
  }

  long long steps_taken() const { return t_; }

 private:
  Options opts_;
  std::vector<Mat<S>> m_, v_;
  long long t_ = 0;
};

// Linear warmup from warmup_lr to lr over warmup_steps, then constant.
inline double lr_at_step(long long step, long long warmup_steps, double warmup_lr, double lr) {
  if (step < 0) throw ParameterError("lr_at_step: negative step");
  if (warmup_steps <= 0 || step >= warmup_steps) return lr;
  double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
  return warmup_lr + (lr - warmup_lr) * frac;
}

}  // namespace kdiag::nn
