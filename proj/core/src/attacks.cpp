#include "mcat/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcat/error.hpp"
#include "mcat/ops.hpp"
#include "mcat/rng.hpp"

namespace mcat {

void AttackConfig::validate() const {
  auto finite_nonneg = [](double v, const char* path) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("must be a finite non-negative number", path);
  };
  finite_nonneg(epsilon, "attack.epsilon");
  finite_nonneg(eta, "attack.eta");
  finite_nonneg(lambda, "train.lambda");
  finite_nonneg(latent.lr, "manifold.latent_lr");
  if (input_box && !(input_box->first < input_box->second)) {
    throw ConfigError("input box needs lo < hi", "data.input_box");
  }
}

void project_delta(Tensor& delta, const Tensor& x, double epsilon,
                   const std::optional<std::pair<double, double>>& input_box) {
  if (!delta.same_shape(x)) throw DimensionError("perturbation shape differs from input shape");
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double v = delta[i];
    if (input_box) v = std::clamp(v, input_box->first - x[i], input_box->second - x[i]);
    delta[i] = std::clamp(v, -epsilon, epsilon);
  }
}

namespace {

// Row-wise radii variant of project_delta.
void project_rows(Tensor& delta, const Tensor& x, std::span<const double> radii,
                  const std::optional<std::pair<double, double>>& input_box) {
  if (!delta.same_shape(x)) throw DimensionError("perturbation shape differs from input shape");
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double v = delta[i];
    if (input_box) v = std::clamp(v, input_box->first - x[i], input_box->second - x[i]);
    delta[i] = std::clamp(v, -radii[i / d], radii[i / d]);
  }
}

}  // namespace

namespace {

void check_batch(const ModelBundle& model, const AttackBatch& batch) {
  if (batch.x.rank() != 2 || batch.x.cols() != model.input_dim()) {
    throw DimensionError("attack input has shape " + to_string(batch.x.shape()));
  }
  if (batch.y.size() != batch.x.rows() || batch.ids.size() != batch.x.rows()) {
    throw DimensionError("attack batch: labels/ids do not match rows");
  }
  for (int label : batch.y) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
      throw ContractError("label " + std::to_string(label) + " outside the classifier's range");
    }
  }
}

void check_generators(const ModelBundle& model, std::span<const int> y) {
  for (int label : y) {
    if (static_cast<std::size_t>(label) >= model.generators.size()) {
      throw ConfigError("no generator for class " + std::to_string(label), "manifold");
    }
  }
}

Tensor plus(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

std::vector<bool> misclassified(const ModelBundle& model, const Tensor& x, std::span<const int> y) {
  auto pred = predict(model, x);
  std::vector<bool> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = pred[i] != y[i];
  return out;
}

AttackResult run_pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg, double lambda,
                     LatentCache* cache, std::span<const double> radii, std::span<const double> etas) {
  const Tensor& x = batch.x;
  const std::size_t d = x.cols();
  Tensor delta(x.shape(), 0.0);
  if (cfg.rand_init) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (!(radii[i] > 0.0)) continue;
      Rng rng(mix_seed({cfg.seed, batch.ids[i]}));
      for (double& v : delta.row(i)) v = rng.uniform(-radii[i], radii[i]);
    }
  }
  project_rows(delta, x, radii, cfg.input_box);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Tensor xt = plus(x, delta);
    Tensor g = attack_gradient(model, {xt, batch.y, batch.ids}, lambda, cfg.latent, cache);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double step = cfg.step_rule == StepRule::sign ? kernels::sign(g[i]) : g[i];
      delta[i] += etas[i / d] * step;
    }
    project_rows(delta, x, radii, cfg.input_box);
  }
  AttackResult r;
  r.x_adv = plus(x, delta);
  r.delta = std::move(delta);
  r.success = misclassified(model, r.x_adv, batch.y);
  return r;
}

AttackResult run_pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg, double lambda,
                     LatentCache* cache) {
  cfg.validate();
  check_batch(model, batch);
  std::vector<double> radii(batch.x.rows(), cfg.epsilon), etas(batch.x.rows(), cfg.eta);
  return run_pgd(model, batch, cfg, lambda, cache, radii, etas);
}

}  // namespace

Tensor attack_gradient(const ModelBundle& model, const AttackBatch& batch, double lambda, const LatentSearch& search,
                       LatentCache* cache, double* objective) {
  check_batch(model, batch);
  Tape tape;
  BoundModel bound = bind_model(tape, model, false);
  Var x = tape.leaf(batch.x, true);
  Var u = model.extractor.forward(bound.extractor, x);
  // Summed (not averaged) so each row's gradient is independent of the batch size.
  Var obj = softmax_cross_entropy(model_scores(model, bound, u), batch.y, Reduction::sum);
  if (lambda > 0.0) {
    check_generators(model, batch.y);
    if (cache == nullptr) throw ContractError("manifold-penalised attack gradient needs a latent cache");
    auto d = manifold_distance_batch(u.value(), batch.y, batch.ids, model.generators, search, *cache, true);
    Var penalty = sum(row_sum_squares(sub(u, tape.constant(std::move(d.anchors)))));
    obj = sub(obj, scale(penalty, lambda));
  }
  tape.backward(obj);
  if (objective) *objective = obj.value().item();
  Tensor g = x.grad();
  if (!g.all_finite()) throw NumericError("attack gradient is not finite");
  return g;
}

AttackResult fgsm(const ModelBundle& model, const AttackBatch& batch, double epsilon,
                  const std::optional<std::pair<double, double>>& input_box) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.eta = epsilon;
  cfg.input_box = input_box;
  cfg.validate();
  check_batch(model, batch);
  Tensor g = attack_gradient(model, batch, 0.0, cfg.latent, nullptr);
  Tensor delta(batch.x.shape(), 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += epsilon * kernels::sign(g[i]);
  project_delta(delta, batch.x, epsilon, input_box);
  AttackResult r;
  r.x_adv = plus(batch.x, delta);
  r.delta = std::move(delta);
  r.success = misclassified(model, r.x_adv, batch.y);
  return r;
}

AttackResult pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg) {
  return run_pgd(model, batch, cfg, 0.0, nullptr);
}

AttackResult ms_pgd(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg,
                    const LatentCache* cache) {
  check_batch(model, batch);
  check_generators(model, batch.y);
  if (cfg.lambda == 0.0) return run_pgd(model, batch, cfg, 0.0, nullptr);
  const std::size_t dz = model.generators.front().latent_dim();
  LatentCache local = cache ? LatentCache(*cache) : LatentCache(dz, cfg.seed);
  return run_pgd(model, batch, cfg, cfg.lambda, &local);
}

AttackResult pgd_within(const ModelBundle& model, const AttackBatch& batch, const AttackConfig& cfg,
                        std::span<const double> radii) {
  cfg.validate();
  check_batch(model, batch);
  if (radii.size() != batch.x.rows()) throw DimensionError("pgd_within: one radius per row required");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("reference epsilon must be positive", "attack.epsilon");
  std::vector<double> etas(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!std::isfinite(radii[i]) || radii[i] < 0.0) throw ContractError("attack radii must be finite and >= 0");
    etas[i] = radii[i] * cfg.eta / cfg.epsilon;
  }
  return run_pgd(model, batch, cfg, 0.0, nullptr, radii, etas);
}

std::vector<double> drift(const ModelBundle& model, const Tensor& x, const Tensor& x_adv, std::span<const int> y,
                          std::span<const std::size_t> ids, const LatentSearch& search, const LatentCache* cache,
                          std::uint64_t seed) {
  if (!x.same_shape(x_adv)) throw DimensionError("drift: clean and adversarial batches differ in shape");
  check_generators(model, y);
  const std::size_t dz = model.generators.front().latent_dim();
  LatentCache local = cache ? LatentCache(*cache) : LatentCache(dz, seed);
  auto clean = manifold_distance_batch(features(model.extractor, x), y, ids, model.generators, search, local, false);
  auto adv = manifold_distance_batch(features(model.extractor, x_adv), y, ids, model.generators, search, local, false);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = adv.distance[i] - clean.distance[i];
  return out;
}

std::vector<double> logit_margins(const ModelBundle& model, const Tensor& x, std::span<const int> y) {
  Tensor s = logits(model.classifier, features(model.extractor, x));
  if (y.size() != s.rows()) throw DimensionError("margins: labels do not match rows");
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto yi = static_cast<std::size_t>(y[i]);
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.cols(); ++k) {
      if (k != yi) other = std::max(other, s.at(i, k));
    }
    out[i] = s.at(i, yi) - other;
  }
  return out;
}

}  // namespace mcat
