#pragma once

#include <cstddef>
#include <vector>

#include "mcat/tensor.hpp"

namespace mcat {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// Momentum SGD with coupled weight decay:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
class MomentumSgd {
 public:
  explicit MomentumSgd(SgdOptions options) : options_(options) {}

  /// `params` and `grads` must keep the same order and shapes across calls.
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  void set_lr(double lr) noexcept { options_.lr = lr; }
  double lr() const noexcept { return options_.lr; }
  const SgdOptions& options() const noexcept { return options_; }

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

/// lr * 0.5 * (1 + cos(pi * step / total)); `base_lr` when total == 0.
double cosine_lr(double base_lr, std::size_t step, std::size_t total);

}  // namespace mcat
