#include "rgn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rgn {

void adam_step(ParamStore& store, const AdamConfig& config) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store.has_grad(i)) {
      throw std::logic_error("adam_step: parameter '" + store.name(i) + "' has no gradient");
    }
  }
  const std::uint64_t t = store.step_count() + 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto w = store.value(i).data();
    auto g = store.grad(i).data();
    auto m = store.first_moment(i).data();
    auto v = store.second_moment(i).data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  store.set_step_count(t);
  store.clear_grad();
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) store.scale_grads(max_norm / norm);
  return norm;
}

}  // namespace rgn
