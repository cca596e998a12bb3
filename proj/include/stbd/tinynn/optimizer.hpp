#pragma once

#include <cmath>
#include <string>

#include "stbd/tinynn/layers.hpp"

namespace stbd::nn {

enum class OptimizerKind { rmsprop, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double learning_rate = 5e-4;
  double smoothing = 0.99;  // RMS decay
  double epsilon = 1e-5;
  double grad_clip = 10.0;  // global L2 norm; <= 0 disables
};

// RMSProp:  v <- a v + (1 - a) g^2,  p <- p - lr g / (sqrt(v) + eps).
template <typename S>
class Optimizer {
 public:
  Optimizer(ParamList<S> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) accum_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
  }

  const OptimizerConfig& config() const { return cfg_; }
  const std::vector<Mat<S>>& accumulators() const { return accum_; }

  // Applies one update, clears gradients and returns the pre-clip gradient norm.
  double step() {
    double sq = 0.0;
    for (const auto* p : params_) {
      const double n = static_cast<double>(p->grad.squaredNorm());
      if (!std::isfinite(n) || !p->grad.allFinite())
        throw DivergenceError("non-finite gradient in " + p->name);
      sq += n;
    }
    const double norm = std::sqrt(sq);
    const S scale = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? static_cast<S>(cfg_.grad_clip / norm) : S(1);
    const S lr = static_cast<S>(cfg_.learning_rate);
    const S a = static_cast<S>(cfg_.smoothing);
    const S eps = static_cast<S>(cfg_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      auto g = (p->grad.array() * scale);
      if (cfg_.kind == OptimizerKind::sgd) {
        p->value.array() -= lr * g;
      } else {
        accum_[i].array() = a * accum_[i].array() + (S(1) - a) * g.square();
        p->value.array() -= lr * g / (accum_[i].array().sqrt() + eps);
      }
      p->zero_grad();
    }
    return norm;
  }

 private:
  ParamList<S> params_;
  OptimizerConfig cfg_;
  std::vector<Mat<S>> accum_;
};

}  // namespace stbd::nn
