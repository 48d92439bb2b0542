#include "mcat/optim.hpp"

#include <cmath>
#include <numbers>

#include "mcat/error.hpp"

namespace mcat {

void MomentumSgd::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ContractError("optimizer: parameter and gradient lists differ");
  if (velocity_.empty()) {
    for (const Tensor* p : params) velocity_.emplace_back(p->shape(), 0.0);
  }
  if (velocity_.size() != params.size()) throw ContractError("optimizer: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& v = velocity_[k];
    if (!p.same_shape(g) || !p.same_shape(v)) throw DimensionError("optimizer: gradient shape mismatch");
    check_finite(g, "optimizer gradient");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = options_.momentum * v[i] + (g[i] + options_.weight_decay * p[i]);
      p[i] -= options_.lr * v[i];
    }
  }
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total) {
  if (total == 0) return base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace mcat
