#include "mcat/experiment.hpp"

#include <algorithm>
#include <chrono>

#include "mcat/checkpoint.hpp"
#include "mcat/error.hpp"
#include "mcat/io.hpp"
#include "mcat/rng.hpp"

namespace mcat {

using nlohmann::json;

namespace {

LongTailDataset load_split(const std::string& path, const RunConfig& cfg, Split split, const char* key) {
  if (path.empty()) throw ConfigError("path required for csv source", key);
  if (!fs::exists(path)) throw IoError("input file not found: " + path);
  auto d = load_csv(path, cfg.data.classes, split);
  if (d.dim() != cfg.data.dim) {
    throw ConfigError(path + " has " + std::to_string(d.dim()) + " feature columns, config says " +
                          std::to_string(cfg.data.dim),
                      "data.d");
  }
  return d;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

std::string metric_rows_csv(const std::vector<std::pair<std::string, double>>& rows) {
  CsvTable t({"metric", "value"});
  for (const auto& [k, v] : rows) t.add_row({k, format_double(v)});
  return t.str();
}

json metrics_json(const std::vector<std::pair<std::string, double>>& rows) {
  json j = json::object();
  for (const auto& [k, v] : rows) j[k] = v;
  return j;
}

ModelBundle load_model(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  return load_checkpoint(checkpoint).model;
}

}  // namespace

Datasets load_datasets(const RunConfig& cfg) {
  if (cfg.data.source == "csv") {
    return {load_split(cfg.data.train_csv, cfg, Split::train, "data.train_csv"),
            load_split(cfg.data.test_csv, cfg, Split::test, "data.test_csv")};
  }
  SynthOptions opt;
  opt.seed = cfg.data.seed;
  opt.dim = cfg.data.dim;
  opt.noise_sigma = cfg.data.noise_sigma;
  opt.counts = class_counts(cfg.data.n_max, cfg.data.ir, cfg.data.classes);
  opt.split = Split::train;
  Datasets d;
  d.train = synth_dataset(opt);
  opt.counts.assign(cfg.data.classes, cfg.data.test_per_class);
  opt.split = Split::test;
  d.test = synth_dataset(opt);
  return d;
}

void write_resolved_config(const RunConfig& cfg, const fs::path& out) {
  write_file_atomic(out / "config.resolved.json", cfg.to_json().dump(2) + "\n");
}

void run_synth_data(const RunConfig& cfg, const fs::path& out) {
  write_resolved_config(cfg, out);
  auto d = load_datasets(cfg);
  json extra = {{"seed", cfg.data.seed}, {"ir", cfg.data.ir}, {"n_max", cfg.data.n_max},
                {"noise_sigma", cfg.data.noise_sigma}};
  save_dataset(out / "train.csv", d.train, extra);
  save_dataset(out / "test.csv", d.test, extra);
}

void run_pretrain(const RunConfig& cfg, const fs::path& out) {
  write_resolved_config(cfg, out);
  auto d = load_datasets(cfg);
  const TrainConfig tc = cfg.train_config(cfg.seeds.front());
  ModelBundle model = make_model(tc.model, mix_seed({tc.seed, 1}));
  TrainLog log;
  prepare_model(model, d.train, tc, log);
  std::vector<std::pair<std::string, double>> rows;
  for (std::size_t c = 0; c < log.pretrain_final_loss.size(); ++c) {
    rows.emplace_back("pretrain_initial_loss_class_" + std::to_string(c), log.pretrain_initial_loss[c]);
    rows.emplace_back("pretrain_loss_class_" + std::to_string(c), log.pretrain_final_loss[c]);
  }
  LatentCache cache(tc.pretrain.latent_dim, mix_seed({tc.seed, 5}));
  Tensor feats = features(model.extractor, d.train.x);
  for (std::size_t c = 0; c < d.train.num_classes(); ++c) {
    auto idx = d.train.indices_of_class(static_cast<int>(c));
    rows.emplace_back("reconstruction_error_class_" + std::to_string(c),
                      reconstruction_error(model.generators[c], feats.gather_rows(idx), tc.attack.latent, cache, idx));
  }
  save_checkpoint(out / "checkpoints" / "pretrained.ckpt", model, {{"config", cfg.to_json()}, {"seed", tc.seed}});
  write_file_atomic(out / "metrics.csv", metric_rows_csv(rows));
  write_file_atomic(out / "summary.json", json{{"command", "pretrain-gen"}, {"metrics", metrics_json(rows)}}.dump(2) + "\n");
}

MetricsReport run_train(const RunConfig& cfg, const fs::path& out) {
  write_resolved_config(cfg, out);
  const auto started = std::chrono::steady_clock::now();
  auto d = load_datasets(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const TrainConfig tc = cfg.train_config(seed);
  auto result = train(d.train, tc, &d.test, out, {{"config", cfg.to_json()}, {"seed", seed}});
  write_file_atomic(out / "train_log.csv", result.log.csv());

  auto rep = evaluate(result.model, d.test, d.train.groups, cfg.eval_config(seed));
  auto rows = rep.rows();
  for (std::size_t c = 0; c < result.log.pretrain_final_loss.size(); ++c) {
    rows.emplace_back("pretrain_loss_class_" + std::to_string(c), result.log.pretrain_final_loss[c]);
  }
  json summary = {{"command", "train"}, {"mode", to_string(tc.mode)}, {"seed", seed}, {"epochs", tc.epochs}};
  if (result.model.extractor.normalize_output && result.model.classifier.normalize_rows) {
    const double L = lipschitz_upper(result.model.extractor);
    auto cert = certify(result.model, d.test.x, d.test.y, L);
    write_file_atomic(out / "cert.csv", cert.csv(iota_ids(d.test.size()), d.test.y));
    rows.emplace_back("lipschitz_upper", L);
    rows.emplace_back("certified", static_cast<double>(cert.certified()));
    rows.emplace_back("theorem1_threshold", cert.theorem1_threshold);
  }
  write_file_atomic(out / "metrics.csv", metric_rows_csv(rows));
  write_file_atomic(out / "attack_records.csv", rep.records_csv());
  summary["metrics"] = metrics_json(rows);
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");

  std::string timings = result.log.timings_csv();
  timings += "total," +
             format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()) + "\n";
  write_file_atomic(out / "timings.csv", timings);
  return rep;
}

MetricsReport run_attack_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  write_resolved_config(cfg, out);
  ModelBundle model = load_model(checkpoint);
  auto d = load_datasets(cfg);
  auto rep = evaluate(model, d.test, d.train.groups, cfg.eval_config(cfg.seeds.front()));
  write_file_atomic(out / "metrics.csv", rep.csv());
  write_file_atomic(out / "attack_records.csv", rep.records_csv());
  write_file_atomic(out / "summary.json",
                    json{{"command", "attack-eval"}, {"checkpoint", checkpoint.string()}, {"metrics", metrics_json(rep.rows())}}
                            .dump(2) +
                        "\n");
  return rep;
}

CertSummary run_certify(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  write_resolved_config(cfg, out);
  ModelBundle model = load_model(checkpoint);
  auto d = load_datasets(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const auto ids = iota_ids(d.test.size());
  CertSummary s;
  s.lipschitz = lipschitz_bound(model.extractor, d.test.x, cfg.train.attack.epsilon, cfg.eval.lipschitz_trials, seed);
  s.cert = certify(model, d.test.x, d.test.y, s.lipschitz.upper);
  s.falsification =
      falsify_certificates(model, d.test.x, d.test.y, ids, s.cert, cfg.eval.cert_attack_steps, 0.99, seed);
  s.theorem1 = theorem1_check(model, d.test.x, d.test.y, ids, s.lipschitz.upper, cfg.eval.theorem1_fractions,
                              cfg.eval.theorem1_steps, seed);
  attach_proxy_radius(s.cert, s.lipschitz.empirical_lower);
  write_file_atomic(out / "cert.csv", s.cert.csv(ids, d.test.y));

  CsvTable t1({"epsilon", "evaluated", "robust", "robust_acc"});
  for (const auto& p : s.theorem1.points) {
    t1.add_row({format_double(p.epsilon), std::to_string(p.evaluated), std::to_string(p.robust),
                format_double(p.evaluated ? static_cast<double>(p.robust) / static_cast<double>(p.evaluated) : 1.0)});
  }
  write_file_atomic(out / "theorem1.csv", t1.str());

  std::vector<std::pair<std::string, double>> rows{
      {"lipschitz_upper", s.lipschitz.upper},
      {"lipschitz_empirical", s.lipschitz.empirical_lower},
      {"certified", static_cast<double>(s.cert.certified())},
      {"falsification_attacked", static_cast<double>(s.falsification.attacked)},
      {"falsification_flipped", static_cast<double>(s.falsification.flipped)},
      {"theta_min_deg", s.theorem1.theta_min_deg},
      {"rho_min", s.theorem1.rho_min},
      {"lipschitz_phi", s.theorem1.lipschitz_phi},
      {"theorem1_epsilon_max", s.theorem1.epsilon_max},
      {"theorem1_counterexamples", static_cast<double>(s.theorem1.counterexamples.size())},
  };
  write_file_atomic(out / "metrics.csv", metric_rows_csv(rows));
  json summary = {{"command", "certify"},
                  {"checkpoint", checkpoint.string()},
                  {"lipschitz_method", s.lipschitz.method},
                  {"metrics", metrics_json(rows)},
                  {"falsified_ids", s.falsification.flipped_ids},
                  {"theorem1_counterexample_ids", s.theorem1.counterexamples},
                  {"theorem1_holds", s.theorem1.holds}};
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return s;
}

std::vector<SweepCell> run_sweep_dir(const RunConfig& cfg, const fs::path& out) {
  write_resolved_config(cfg, out);
  auto d = load_datasets(cfg);
  auto cells = run_sweep(cfg, d.train, d.test);
  write_file_atomic(out / "sweep_cells.csv", sweep_cells_csv(cells));
  write_file_atomic(out / "sweep.csv", sweep_table_csv(cells));
  write_file_atomic(out / "sweep.txt", sweep_table_text(cells));
  json summary = {{"command", "sweep"}, {"param", cfg.sweep.param}, {"values", cfg.sweep.values}, {"seeds", cfg.seeds}};
  std::size_t failed = 0;
  for (const auto& c : cells) failed += !c.ok;
  summary["failed_cells"] = failed;
  if (cfg.sweep.param == "lambda") {
    std::vector<SweepCell> positive;
    for (const auto& c : cells) {
      if (c.value > 0.0) positive.push_back(c);
    }
    auto rows = theorem2_rows(positive);
    if (!rows.empty()) {
      auto fit = fit_gap_bound(rows);
      write_file_atomic(out / "theorem2.csv", theorem2_csv(rows, fit));
      summary["theorem2"] = {{"c", fit.c}, {"nonnegative_residuals", fit.nonnegative}, {"holds", fit.holds}};
    }
  }
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return cells;
}

std::string compare_runs(const std::vector<fs::path>& runs) {
  if (runs.empty()) throw ContractError("report needs at least one run directory");
  std::vector<std::string> order;
  std::vector<std::vector<std::pair<std::string, std::string>>> values;
  for (const auto& run : runs) {
    const fs::path p = run / "metrics.csv";
    if (!fs::exists(p)) throw IoError("missing " + p.string());
    CsvDocument doc = parse_csv(read_file(p), true);
    const std::size_t km = doc.column("metric"), kv = doc.column("value");
    values.emplace_back();
    for (const auto& row : doc.rows) {
      values.back().emplace_back(row[km], row[kv]);
      if (std::find(order.begin(), order.end(), row[km]) == order.end()) order.push_back(row[km]);
    }
  }
  std::vector<std::string> header{"metric"};
  for (const auto& r : runs) header.push_back(r.filename().empty() ? r.parent_path().filename().string() : r.filename().string());
  for (std::size_t k = 1; k < runs.size(); ++k) header.push_back("delta_" + header[k + 1]);
  CsvTable t(header);
  auto lookup = [&](std::size_t run, const std::string& metric) -> std::optional<double> {
    for (const auto& [k, v] : values[run]) {
      if (k == metric) return std::stod(v);
    }
    return std::nullopt;
  };
  for (const auto& m : order) {
    std::vector<std::string> row{m};
    for (std::size_t r = 0; r < runs.size(); ++r) {
      auto v = lookup(r, m);
      row.push_back(v ? format_double(*v) : "NA");
    }
    auto base = lookup(0, m);
    for (std::size_t r = 1; r < runs.size(); ++r) {
      auto v = lookup(r, m);
      row.push_back(base && v ? format_double(*v - *base) : "NA");
    }
    t.add_row(row);
  }
  return t.str();
}

json checkpoint_config(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  auto loaded = load_checkpoint(checkpoint);
  if (loaded.config.contains("config")) return loaded.config.at("config");
  return json();
}

}  // namespace mcat
