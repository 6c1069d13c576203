#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scsr/tensor.hpp"

namespace scsr {

// Adam with bias correction. Moment buffers are keyed by parameter address and
// created on first touch, so one optimizer instance can drive any subset of a
// model's parameters; reset_state() drops every buffer and the step counter.
template <typename T>
class Adam {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Config cfg) : cfg_(cfg) {}

  void step(const std::vector<std::pair<Tensor<T>*, Tensor<T>>>& grads);
  void reset_state() {
    state_.clear();
    t_ = 0;
  }
  int64_t steps_taken() const { return t_; }
  const Config& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  struct Moments {
    Tensor<T> m, v;
  };
  Config cfg_;
  int64_t t_ = 0;
  std::unordered_map<Tensor<T>*, Moments> state_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace scsr
