// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "mbev/nn/graph.hpp"

namespace mbev::nn {

// Adam with decoupled weight decay and cosine learning-rate decay after a
// short linear warmup. Decay applies to matrices only; vectors (biases,
// norm scales, embeddings-of-one) are left alone.
template <class S>
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    int total_steps = 1000;
    int warmup_steps = 10;
    double final_lr_frac = 0.05;
  };

  AdamW(std::vector<ParamTensor<S>*> params, Options opt)
      : params_(std::move(params)), opt_(opt) {
    for (auto* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  double current_lr() const {
    const double t = double(step_);
    if (t < opt_.warmup_steps && opt_.warmup_steps > 0)
      return opt_.lr * (t + 1.0) / opt_.warmup_steps;
    const double span = std::max(1.0, double(opt_.total_steps - opt_.warmup_steps));
    const double x = std::min(1.0, (t - opt_.warmup_steps) / span);
    const double cosine = 0.5 * (1.0 + std::cos(M_PI * x));
    return opt_.lr * (opt_.final_lr_frac + (1.0 - opt_.final_lr_frac) * cosine);
  }

  void step() {
    const double lr = current_lr();
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, step_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, step_);
    for (size_t k = 0; k < params_.size(); ++k) {
      auto* p = params_[k];
      const bool decay = p->rows > 1 && p->cols > 1;
      for (size_t i = 0; i < p->size(); ++i) {
        const double g = double(p->g[i]);
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g;
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m_[k][i] / bc1;
        const double vhat = v_[k][i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + opt_.eps);
        if (decay) upd += opt_.weight_decay * double(p->v[i]);
        p->v[i] = S(double(p->v[i]) - lr * upd);
      }
      p->zero_grad();
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

 private:
  std::vector<ParamTensor<S>*> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

}  // namespace mbev::nn
