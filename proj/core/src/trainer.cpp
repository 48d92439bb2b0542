#include "mcat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "mcat/checkpoint.hpp"
#include "mcat/error.hpp"
#include "mcat/geometry.hpp"
#include "mcat/io.hpp"
#include "mcat/ops.hpp"
#include "mcat/rng.hpp"

namespace mcat {

const char* to_string(TrainMode mode) noexcept { return mode == TrainMode::mcat ? "mcat" : "pgd_at"; }

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* path) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("must be a finite non-negative number", path);
  };
  nonneg(lambda, "train.lambda");
  nonneg(beta_geom, "geometry.beta_geom");
  nonneg(sgd.lr, "train.lr");
  nonneg(sgd.momentum, "train.momentum");
  nonneg(sgd.weight_decay, "train.weight_decay");
  if (batch_size == 0) throw ConfigError("must be positive", "train.batch_size");
  if (mode == TrainMode::pgd_at && lambda != 0.0) throw ConfigError("pgd_at mode forbids lambda > 0", "train.lambda");
  if (mode == TrainMode::pgd_at && beta_geom != 0.0) {
    throw ConfigError("pgd_at mode forbids beta_geom > 0", "geometry.beta_geom");
  }
  attack.validate();
}

std::string TrainLog::csv() const {
  CsvTable t({"epoch", "loss_total", "loss_classification", "loss_manifold", "loss_attack_manifold", "loss_geometry",
              "lr", "probe_clean_acc", "probe_robust_acc", "theta_min_deg", "etf_error", "mean_drift"});
  for (const auto& e : epochs) {
    t.add_row({std::to_string(e.epoch), format_double(e.loss.total), format_double(e.loss.classification),
               format_double(e.loss.manifold), format_double(e.loss.attack_manifold), format_double(e.loss.geometry),
               format_double(e.lr), format_double(e.probe_clean_acc), format_double(e.probe_robust_acc),
               format_double(e.theta_min_deg), format_double(e.etf_error), format_double(e.mean_drift)});
  }
  return t.str();
}

std::string TrainLog::timings_csv() const {
  CsvTable t({"epoch", "wall_seconds"});
  for (const auto& e : epochs) t.add_row({std::to_string(e.epoch), format_double(e.wall_seconds)});
  return t.str();
}

std::vector<Tensor*> trainable_parameters(ModelBundle& model) {
  auto params = model.extractor.net.parameters();
  params.push_back(&model.classifier.weight);
  return params;
}

namespace {

std::vector<const Tensor*> bound_gradients(const BoundModel& bound) {
  std::vector<const Tensor*> grads;
  for (std::size_t l = 0; l < bound.extractor.weights.size(); ++l) {
    grads.push_back(&bound.extractor.weights[l].grad());
    grads.push_back(&bound.extractor.biases[l].grad());
  }
  grads.push_back(&bound.classifier_weight.grad());
  return grads;
}

void require_frozen(const ModelBundle& model) {
  for (const auto& g : model.generators) {
    if (!g.frozen()) throw ContractError("generator for class " + std::to_string(g.class_id()) + " is not frozen");
  }
}

StepLosses adversarial_step(ModelBundle& model, const AttackBatch& batch, const TrainConfig& cfg, TrainState& state,
                            std::uint64_t attack_seed, double lambda, double beta_geom) {
  require_frozen(model);
  AttackConfig attack = cfg.attack;
  attack.lambda = lambda;
  attack.seed = attack_seed;
  AttackResult adv = lambda > 0.0 ? ms_pgd(model, batch, attack, &state.cache) : pgd(model, batch, attack);

  Tape tape;
  BoundModel bound = bind_model(tape, model, true);
  OuterLoss loss = outer_loss(tape, model, bound, adv.x_adv, batch.y, batch.ids, lambda, beta_geom, cfg.attack.latent,
                              &state.cache);
  if (!std::isfinite(loss.parts.total)) throw NumericError("non-finite training loss");
  tape.backward(loss.total);
  state.optimizer.step(trainable_parameters(model), bound_gradients(bound));
  return loss.parts;
}

Tensor gather(const Tensor& x, std::span<const std::size_t> rows) { return x.gather_rows(rows); }

std::vector<int> gather_labels(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

}  // namespace

OuterLoss outer_loss(Tape& tape, const ModelBundle& model, const BoundModel& bound, const Tensor& x_adv,
                     std::span<const int> y, std::span<const std::size_t> ids, double lambda, double beta_geom,
                     const LatentSearch& search, LatentCache* cache) {
  OuterLoss out;
  Var u = model.extractor.forward(bound.extractor, tape.constant(x_adv));
  Var ce = softmax_cross_entropy(model_scores(model, bound, u), y, Reduction::mean);
  out.parts.classification = ce.value().item();
  Var total = ce;
  if (lambda > 0.0) {
    require_frozen(model);
    if (cache == nullptr) throw ContractError("manifold term needs a latent cache");
    auto d = manifold_distance_batch(u.value(), y, ids, model.generators, search, *cache, true);
    Var man = mean(row_sum_squares(sub(u, tape.constant(std::move(d.anchors)))));
    out.parts.manifold = man.value().item();
    out.parts.attack_manifold = -lambda * out.parts.manifold;
    total = add(total, scale(man, lambda));
  }
  if (beta_geom > 0.0) {
    Var w = model.classifier.normalize_rows ? normalize_rows(bound.classifier_weight) : bound.classifier_weight;
    Var geom = geom_regularizer(w);
    out.parts.geometry = geom.value().item();
    total = add(total, scale(geom, beta_geom));
  }
  out.parts.total = total.value().item();
  out.total = total;
  return out;
}

StepLosses mcat_step(ModelBundle& model, const AttackBatch& batch, const TrainConfig& cfg, TrainState& state,
                     std::uint64_t attack_seed) {
  return adversarial_step(model, batch, cfg, state, attack_seed, cfg.lambda, cfg.beta_geom);
}

StepLosses pgd_at_step(ModelBundle& model, const AttackBatch& batch, const TrainConfig& cfg, TrainState& state,
                       std::uint64_t attack_seed) {
  return adversarial_step(model, batch, cfg, state, attack_seed, 0.0, 0.0);
}

double clean_step(ModelBundle& model, const Tensor& x, std::span<const int> y, MomentumSgd& optimizer) {
  Tape tape;
  BoundModel bound = bind_model(tape, model, true);
  Var u = model.extractor.forward(bound.extractor, tape.constant(x));
  Var ce = softmax_cross_entropy(model_scores(model, bound, u), y, Reduction::mean);
  const double loss = ce.value().item();
  if (!std::isfinite(loss)) throw NumericError("non-finite warm-up loss");
  tape.backward(ce);
  optimizer.step(trainable_parameters(model), bound_gradients(bound));
  return loss;
}

void prepare_model(ModelBundle& model, const LongTailDataset& data, const TrainConfig& cfg, TrainLog& log) {
  const std::size_t n = data.size();
  const std::size_t bs = cfg.batch_size;
  MomentumSgd warm(cfg.sgd);
  for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
    auto order = shuffled_indices(n, mix_seed({cfg.seed, 6, e}));
    for (std::size_t start = 0; start < n; start += bs) {
      std::span<const std::size_t> rows(order.data() + start, std::min(bs, n - start));
      Tensor x = gather(data.x, rows);
      auto y = gather_labels(data.y, rows);
      clean_step(model, x, y, warm);
    }
  }

  std::vector<Tensor> by_class(data.num_classes());
  {
    Tensor feats = features(model.extractor, data.x);
    for (std::size_t c = 0; c < data.num_classes(); ++c) {
      by_class[c] = feats.gather_rows(data.indices_of_class(static_cast<int>(c)));
    }
  }
  PretrainOptions pre_opt = cfg.pretrain;
  pre_opt.seed = mix_seed({cfg.seed, 4});
  PretrainResult pre = pretrain_generators(by_class, pre_opt);
  model.generators = std::move(pre.generators);
  log.pretrain_initial_loss = std::move(pre.initial_loss);
  log.pretrain_final_loss = std::move(pre.final_loss);
}

TrainResult train(const LongTailDataset& data, const TrainConfig& cfg, const LongTailDataset* probe,
                  const std::optional<std::filesystem::path>& out_dir, const nlohmann::json& snapshot) {
  cfg.validate();
  if (data.size() == 0) throw DataError("training set is empty");
  if (data.num_classes() != cfg.model.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes()) + " classes, model expects " +
                          std::to_string(cfg.model.num_classes),
                      "data.C");
  }
  if (data.dim() != cfg.model.input_dim) {
    throw ConfigError("dataset has " + std::to_string(data.dim()) + " columns, model expects " +
                          std::to_string(cfg.model.input_dim),
                      "data.d");
  }
  TrainResult res;
  res.model = make_model(cfg.model, mix_seed({cfg.seed, 1}));
  ModelBundle& model = res.model;

  auto save = [&](const std::string& name, std::size_t epoch) {
    if (!out_dir) return;
    nlohmann::json extra = snapshot;
    extra["epoch"] = epoch;
    save_checkpoint(*out_dir / "checkpoints" / name, model, extra);
  };

  if (cfg.epochs == 0) {
    save("final.ckpt", 0);
    return res;
  }

  prepare_model(model, data, cfg, res.log);
  const std::size_t n = data.size();
  const std::size_t bs = cfg.batch_size;
  TrainState state{MomentumSgd(cfg.sgd), LatentCache(cfg.pretrain.latent_dim, mix_seed({cfg.seed, 5}))};

  Tensor probe_x;
  std::vector<int> probe_y;
  std::vector<std::size_t> probe_ids;
  if (probe && probe->size() > 0 && cfg.probe_size > 0) {
    auto order = shuffled_indices(probe->size(), mix_seed({cfg.seed, 7}));
    order.resize(std::min(cfg.probe_size, order.size()));
    std::sort(order.begin(), order.end());
    probe_x = probe->x.gather_rows(order);
    probe_y = gather_labels(probe->y, order);
    probe_ids = order;
  }

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = cfg.cosine ? cosine_lr(cfg.sgd.lr, e, cfg.epochs) : cfg.sgd.lr;
    state.optimizer.set_lr(lr);
    auto order = shuffled_indices(n, mix_seed({cfg.seed, 2, e}));
    StepLosses sum;
    std::size_t b = 0;
    for (std::size_t start = 0; start < n; start += bs, ++b) {
      std::span<const std::size_t> rows(order.data() + start, std::min(bs, n - start));
      Tensor x = gather(data.x, rows);
      auto y = gather_labels(data.y, rows);
      AttackBatch batch{x, y, rows};
      const std::uint64_t attack_seed = mix_seed({cfg.seed, 3, e, b});
      StepLosses l;
      try {
        l = cfg.mode == TrainMode::mcat ? mcat_step(model, batch, cfg, state, attack_seed)
                                        : pgd_at_step(model, batch, cfg, state, attack_seed);
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(e + 1) + ", batch " + std::to_string(b) + ": " + err.what());
      }
      const double w = static_cast<double>(rows.size()) / static_cast<double>(n);
      sum.total += w * l.total;
      sum.classification += w * l.classification;
      sum.manifold += w * l.manifold;
      sum.attack_manifold += w * l.attack_manifold;
      sum.geometry += w * l.geometry;
    }

    EpochLog log;
    log.epoch = e + 1;
    log.loss = sum;
    log.lr = lr;
    const Tensor w_eff = model.classifier.effective_weight();
    log.theta_min_deg = theta_min(w_eff);
    log.etf_error = etf_alignment_error(w_eff);
    if (!probe_y.empty()) {
      AttackConfig probe_attack = cfg.attack;
      probe_attack.lambda = 0.0;
      probe_attack.seed = mix_seed({cfg.seed, 8});
      AttackBatch pb{probe_x, probe_y, probe_ids};
      auto clean_pred = predict(model, probe_x);
      auto adv = pgd(model, pb, probe_attack);
      std::size_t clean_ok = 0, adv_ok = 0;
      for (std::size_t i = 0; i < probe_y.size(); ++i) {
        clean_ok += clean_pred[i] == probe_y[i];
        adv_ok += !adv.success[i];
      }
      log.probe_clean_acc = static_cast<double>(clean_ok) / static_cast<double>(probe_y.size());
      log.probe_robust_acc = static_cast<double>(adv_ok) / static_cast<double>(probe_y.size());
      auto dd = drift(model, probe_x, adv.x_adv, probe_y, probe_ids, cfg.attack.latent, nullptr,
                      mix_seed({cfg.seed, 9}));
      double acc = 0.0;
      for (double v : dd) acc += v;
      log.mean_drift = acc / static_cast<double>(dd.size());
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    res.log.epochs.push_back(log);

    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 && e + 1 < cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", e + 1);
      save(name, e + 1);
    }
  }
  save("final.ckpt", cfg.epochs);
  return res;
}

}  // namespace mcat
