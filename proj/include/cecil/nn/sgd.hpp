#pragma once

#include <vector>

#include "cecil/nn/layers.hpp"

namespace cecil::nn {

/// SGD with momentum and decoupled-from-nothing classic weight decay:
///   v <- momentum * v + (g + wd * w);  w <- w - lr * v
class Sgd {
public:
  Sgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<Param*>& params, double lr) {
    if (velocity_.size() != params.size()) {
      velocity_.clear();
      for (Param* p : params) velocity_.emplace_back(p->value.size(), 0.0f);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param& p = *params[i];
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        float g = p.grad[j] + float(weight_decay_) * p.value[j];
        v[j] = float(momentum_) * v[j] + g;
        p.value[j] -= float(lr) * v[j];
      }
    }
  }

private:
  double momentum_, weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

/// Step schedule: lr = base * decay^(number of milestones passed).
inline double lr_at_epoch(double base_lr, const std::vector<int>& milestones,
                          double decay, int epoch) {
  double lr = base_lr;
  for (int m : milestones)
    if (epoch >= m) lr *= decay;
  return lr;
}

}  // namespace cecil::nn
