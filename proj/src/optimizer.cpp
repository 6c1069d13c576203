#include "scsr/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace scsr {

template <typename T>
void Adam<T>::step(const std::vector<std::pair<Tensor<T>*, Tensor<T>>>& grads) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [param, grad] : grads) {
    if (param->numel() != grad.numel()) throw std::invalid_argument("adam: gradient size mismatch");
    Moments& mo = state_[param];
    if (mo.m.empty()) {
      mo.m = Tensor<T>(param->shape);
      mo.v = Tensor<T>(param->shape);
    }
    T* p = param->ptr();
    const T* g = grad.ptr();
    T* m = mo.m.ptr();
    T* v = mo.v.ptr();
    for (int64_t i = 0; i < param->numel(); ++i) {
      double gi = static_cast<double>(g[i]);
      double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
      double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace scsr
