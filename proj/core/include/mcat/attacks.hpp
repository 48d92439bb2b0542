#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mcat/manifold.hpp"
#include "mcat/nets.hpp"

namespace mcat {

enum class StepRule {
  sign,  // delta += eta * sign(grad), standard l-inf PGD
  raw,   // delta += eta * grad, the literal update of the MS-PGD equation
};

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double eta = 2.0 / 255.0;
  std::size_t steps = 10;
  double lambda = 0.0;  // manifold penalty inside the attack objective
  LatentSearch latent;
  bool rand_init = true;
  std::optional<std::pair<double, double>> input_box;
  StepRule step_rule = StepRule::sign;
  std::uint64_t seed = 0;  // per-sample start draws use mix_seed({seed, sample_id})

  /// ConfigError (with an "attack.*" path) for negative or non-finite values.
  void validate() const;
};

struct AttackResult {
  Tensor x_adv;
  Tensor delta;
  std::vector<bool> success;  // prediction on x_adv differs from the label
};

/// A batch of inputs with labels and dataset sample ids. Ids seed the random
/// start and key the latent cache, so per-sample results do not depend on
/// which other samples share the batch.
struct AttackBatch {
  const Tensor& x;
  std::span<const int> y;
  std::span<const std::size_t> ids;
};

/// Clamps delta into the eps-box and, when configured, so that x + delta stays
/// inside the input box. Shared by every attack.
void project_delta(Tensor& delta, const Tensor& x, double epsilon,
                   const std::optional<std::pair<double, double>>& input_box);

/// Gradient w.r.t. x of sum_i [ CE(scale * s(x_i), y_i) - lambda * d_{M_{y_i}}(phi(x_i)) ],
/// with the manifold term differentiated by the envelope rule. `cache` provides
/// warm starts and receives the new z* when non-null. `objective` receives the
/// summed objective when non-null.
Tensor attack_gradient(const ModelBundle& model, const AttackBatch& batch, double lambda, const LatentSearch& search,
                       LatentCache* cache, double* objective = nullptr);

AttackResult fgsm(const ModelBundle& model, const AttackBatch& batch, double epsilon,
                  const std::optional<std::pair<double, double>>& input_box = std::nullopt);

/// PGD: cfg.lambda is ignored (treated as 0).
AttackResult pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg);

/// PGD with a separate l-inf radius per row; the step size of row i is
/// radii[i] * cfg.eta / cfg.epsilon. cfg.lambda is ignored.
AttackResult pgd_within(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg,
                        std::span<const double> radii);

/// MS-PGD. Warm starts come from `cache` (or seeded draws when null); the
/// intermediate z* of every step are kept in a private copy so `cache` itself
/// is not modified. ConfigError when a label has no generator.
AttackResult ms_pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg,
                    const LatentCache* cache = nullptr);

/// Delta d = d_{M_y}(phi(x_adv)) - d_{M_y}(phi(x)), both latent searches warm
/// started from the same cache entry (seeded draw when null). `cache` is read only.
std::vector<double> drift(const ModelBundle& model, const Tensor& x, const Tensor& x_adv, std::span<const int> y,
                          std::span<const std::size_t> ids, const LatentSearch& search,
                          const LatentCache* cache = nullptr, std::uint64_t seed = 0);

/// Raw-logit margin s_y - max_{k != y} s_k per row.
std::vector<double> logit_margins(const ModelBundle& model, const Tensor& x, std::span<const int> y);

}  // namespace mcat
