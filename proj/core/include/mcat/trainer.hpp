#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcat/attacks.hpp"
#include "mcat/data.hpp"
#include "mcat/manifold.hpp"
#include "mcat/nets.hpp"
#include "mcat/optim.hpp"

namespace mcat {

enum class TrainMode { mcat, pgd_at };

const char* to_string(TrainMode mode) noexcept;

struct TrainConfig {
  TrainMode mode = TrainMode::mcat;
  ModelShape model;
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  SgdOptions sgd{0.1, 0.9, 5e-4};
  bool cosine = true;
  double lambda = 0.1;
  double beta_geom = 3e-3;
  AttackConfig attack;  // lambda and seed are set per step from this config
  /// Clean-training epochs before generator pretraining (both modes).
  std::size_t warmup_epochs = 5;
  PretrainOptions pretrain;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t probe_size = 200;      // held-out rows evaluated after every epoch
  std::uint64_t seed = 0;

  /// ConfigError for invalid values; pgd_at requires lambda == beta_geom == 0.
  void validate() const;
};

struct StepLosses {
  double total = 0.0;
  double classification = 0.0;  // mean cross-entropy at x_adv
  double manifold = 0.0;        // mean d_{M_y}(phi(x_adv)), before the lambda weight
  double attack_manifold = 0.0; // -lambda * mean d as seen by the inner maximisation
  double geometry = 0.0;        // R_geom(W), before the beta weight
};

struct EpochLog {
  std::size_t epoch = 0;
  StepLosses loss;
  double lr = 0.0;
  double probe_clean_acc = 0.0;
  double probe_robust_acc = 0.0;
  double theta_min_deg = 0.0;
  double etf_error = 0.0;
  double mean_drift = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<double> pretrain_initial_loss;
  std::vector<double> pretrain_final_loss;

  /// Per-epoch CSV without wall time, so it is reproducible bit for bit.
  std::string csv() const;
  /// epoch,wall_seconds
  std::string timings_csv() const;
};

/// Everything the outer loss sees for one batch.
struct OuterLoss {
  Var total;
  StepLosses parts;
};

/// L = mean CE(scale * s(x_adv), y) + lambda * mean d_{M_y}(phi(x_adv)) + beta_geom * R_geom(W_eff)
/// recorded on `tape` with the model bound as `bound`. The manifold anchors
/// come from a latent search warm started from `cache`, which is updated.
OuterLoss outer_loss(Tape& tape, const ModelBundle& model, const BoundModel& bound, const Tensor& x_adv,
                     std::span<const int> y, std::span<const std::size_t> ids, double lambda, double beta_geom,
                     const LatentSearch& search, LatentCache* cache);

/// Per-step state shared between steps of one run.
struct TrainState {
  MomentumSgd optimizer;
  LatentCache cache;
};

/// One MCAT step: MS-PGD with the config's lambda, then one optimizer update
/// on the outer loss. ContractError when a generator is not frozen.
/// `attack_seed` seeds the per-sample random starts.
StepLosses mcat_step(ModelBundle& model, const AttackBatch& batch, const TrainConfig& cfg, TrainState& state,
                     std::uint64_t attack_seed);

/// PGD-AT step: PGD then cross-entropy minimisation (lambda = beta_geom = 0).
StepLosses pgd_at_step(ModelBundle& model, const AttackBatch& batch, const TrainConfig& cfg, TrainState& state,
                       std::uint64_t attack_seed);

/// Clean cross-entropy step (warm-up phase).
double clean_step(ModelBundle& model, const Tensor& x, std::span<const int> y, MomentumSgd& optimizer);

/// Warm-up epochs of clean training on `model`, then per-class generator
/// pretraining on its clean features; the frozen generators are attached and
/// the pretraining losses recorded in `log`.
void prepare_model(ModelBundle& model, const LongTailDataset& data, const TrainConfig& cfg, TrainLog& log);

struct TrainResult {
  ModelBundle model;
  TrainLog log;
};

/// Algorithm 1. Builds the model from cfg.model and cfg.seed, runs warm-up,
/// pretrains and freezes one generator per class on clean features, then
/// runs the adversarial epochs. `probe` (optional) is evaluated after every
/// epoch. With `out_dir`, checkpoints go to out_dir/checkpoints/. With
/// epochs == 0 the initial model is returned without warm-up or generators.
/// A non-finite loss aborts with NumericError naming the epoch and batch.
/// `snapshot` is stored in every checkpoint header.
TrainResult train(const LongTailDataset& data, const TrainConfig& cfg, const LongTailDataset* probe = nullptr,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const nlohmann::json& snapshot = nlohmann::json::object());

/// Parameter tensors updated by the optimizer: extractor weights and biases,
/// then the classifier weight.
std::vector<Tensor*> trainable_parameters(ModelBundle& model);

}  // namespace mcat
