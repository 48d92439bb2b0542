#include "mcat/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mcat/error.hpp"
#include "mcat/io.hpp"
#include "mcat/metrics.hpp"
#include "mcat/ops.hpp"
#include "mcat/parallel.hpp"

namespace mcat {

namespace {

std::vector<double> scaled_ce(const ModelBundle& model, const Tensor& x, std::span<const int> y) {
  Tensor s = logits(model.classifier, features(model.extractor, x));
  for (double& v : s.data()) v *= model.logit_scale;
  return cross_entropy_rows(s, y);
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace

RiskEstimate estimate_risks(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                            std::span<const std::size_t> ids, const AttackConfig& attack, double lambda,
                            std::uint64_t seed) {
  if (!model.has_generators()) throw ConfigError("risk estimates need class generators", "manifold");
  RiskEstimate r;
  AttackConfig plain = attack;
  plain.lambda = 0.0;
  auto adv = pgd(model, {x, y, ids}, plain);
  r.robust_terms = scaled_ce(model, adv.x_adv, y);

  AttackConfig ms = attack;
  ms.lambda = lambda;
  const std::size_t dz = model.generators.front().latent_dim();
  LatentCache cache(dz, seed);
  auto madv = ms_pgd(model, {x, y, ids}, ms, &cache);
  auto ce = scaled_ce(model, madv.x_adv, y);
  auto d = manifold_distance_batch(features(model.extractor, madv.x_adv), y, ids, model.generators, attack.latent,
                                   cache, false);
  r.mcat_terms.resize(ce.size());
  double man = 0.0;
  for (std::size_t i = 0; i < ce.size(); ++i) {
    r.mcat_terms[i] = ce[i] + lambda * d.distance[i];
    man += lambda * d.distance[i];
  }
  r.robust_risk = mean_of(r.robust_terms);
  r.mcat_objective = mean_of(r.mcat_terms);
  r.manifold_term = ce.empty() ? 0.0 : man / static_cast<double>(ce.size());
  r.gap = r.robust_risk - r.mcat_objective;
  r.ms_drift = mean_of(drift(model, x, madv.x_adv, y, ids, attack.latent, &cache));
  return r;
}

RunConfig with_param(const RunConfig& base, const std::string& param, double value) {
  RunConfig c = base;
  if (param == "lambda") {
    c.train.mode = TrainMode::mcat;
    c.train.lambda = value;
  } else if (param == "beta_geom") {
    c.train.mode = TrainMode::mcat;
    c.train.beta_geom = value;
  } else if (param == "latent_steps") {
    if (value < 0.0 || value != std::floor(value)) throw ConfigError("latent steps must be a whole number", "sweep.values");
    c.train.attack.latent.steps = static_cast<std::size_t>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "'", "sweep.param");
  }
  c.train.validate();
  return c;
}

double SweepCell::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  throw MetricError("sweep cell has no metric '" + name + "'");
}

std::vector<std::pair<std::string, double>> run_cell(const RunConfig& cfg, std::uint64_t seed,
                                                     const LongTailDataset& train_set, const LongTailDataset& test) {
  auto result = train(train_set, cfg.train_config(seed));
  const EvalConfig ec = cfg.eval_config(seed);
  auto rep = evaluate(result.model, test, train_set.groups, ec);
  std::vector<std::size_t> ids(test.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  std::vector<std::pair<std::string, double>> m{
      {"clean_acc", rep.clean_acc},
      {"robust_acc", rep.robust_acc},
      {"ba", rep.ba},
      {"br", rep.br},
  };
  for (std::size_t g = 0; g < 3; ++g) {
    if (rep.groups[g].classes == 0) continue;
    const std::string name = to_string(static_cast<Group>(g));
    m.emplace_back(name + "_clean_acc", rep.groups[g].clean_acc);
    m.emplace_back(name + "_robust_acc", rep.groups[g].robust_acc);
  }
  m.emplace_back("theta_min_deg", rep.theta_min_deg);
  m.emplace_back("etf_error", rep.etf_error);
  m.emplace_back("drift_mean", rep.drift_mean);
  if (result.model.has_generators()) {
    auto risk = estimate_risks(result.model, test.x, test.y, ids, ec.attack, cfg.train.lambda, seed);
    m.emplace_back("ms_drift_mean", risk.ms_drift);
    m.emplace_back("robust_risk", risk.robust_risk);
    m.emplace_back("mcat_objective", risk.mcat_objective);
    m.emplace_back("manifold_term", risk.manifold_term);
    m.emplace_back("gap", risk.gap);
  }
  return m;
}

std::vector<SweepCell> run_sweep(const RunConfig& base, const LongTailDataset& train_set,
                                 const LongTailDataset& test) {
  if (base.seeds.empty()) throw ConfigError("at least one seed required", "seeds");
  std::vector<SweepCell> cells;
  for (double v : base.sweep.values) {
    for (std::uint64_t s : base.seeds) {
      SweepCell c;
      c.value = v;
      c.seed = s;
      cells.push_back(c);
    }
  }
  parallel_for(cells.size(), [&](std::size_t k) {
    SweepCell& c = cells[k];
    try {
      c.metrics = run_cell(with_param(base, base.sweep.param, c.value), c.seed, train_set, test);
      c.ok = true;
    } catch (const std::exception& e) {
      c.ok = false;
      c.error = e.what();
      c.metrics.clear();
    }
  });
  return cells;
}

SweepStat sweep_stat(std::span<const SweepCell> cells, double value, const std::string& metric) {
  std::vector<double> xs;
  for (const auto& c : cells) {
    if (c.ok && c.value == value) xs.push_back(c.metric(metric));
  }
  SweepStat s;
  s.runs = xs.size();
  if (xs.empty()) return s;
  s.mean = mean_of(xs);
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

namespace {

std::vector<double> distinct_values(std::span<const SweepCell> cells) {
  std::vector<double> vals;
  for (const auto& c : cells) {
    if (std::find(vals.begin(), vals.end(), c.value) == vals.end()) vals.push_back(c.value);
  }
  return vals;
}

std::vector<std::string> metric_names(std::span<const SweepCell> cells) {
  std::vector<std::string> names;
  for (const auto& c : cells) {
    for (const auto& [k, v] : c.metrics) {
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
    }
  }
  return names;
}

std::size_t failures(std::span<const SweepCell> cells, double value) {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [&](const SweepCell& c) { return c.value == value && !c.ok; }));
}

}  // namespace

std::string sweep_cells_csv(std::span<const SweepCell> cells) {
  const auto names = metric_names(cells);
  std::vector<std::string> header{"value", "seed", "ok"};
  header.insert(header.end(), names.begin(), names.end());
  header.push_back("error");
  CsvTable t(header);
  for (const auto& c : cells) {
    std::vector<std::string> row{format_double(c.value), std::to_string(c.seed), c.ok ? "1" : "0"};
    for (const auto& n : names) row.push_back(c.ok ? format_double(c.metric(n)) : "");
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    row.push_back(err);
    t.add_row(row);
  }
  return t.str();
}

std::string sweep_table_csv(std::span<const SweepCell> cells) {
  const auto names = metric_names(cells);
  std::vector<std::string> header{"value", "runs", "failed"};
  for (const auto& n : names) {
    header.push_back(n + "_mean");
    header.push_back(n + "_std");
  }
  CsvTable t(header);
  for (double v : distinct_values(cells)) {
    std::vector<std::string> row{format_double(v)};
    std::size_t runs = 0;
    std::vector<std::string> stats;
    for (const auto& n : names) {
      auto s = sweep_stat(cells, v, n);
      runs = std::max(runs, s.runs);
      stats.push_back(s.runs ? format_double(s.mean) : "NA");
      stats.push_back(s.runs ? format_double(s.std) : "NA");
    }
    row.push_back(std::to_string(runs));
    row.push_back(std::to_string(failures(cells, v)));
    row.insert(row.end(), stats.begin(), stats.end());
    t.add_row(row);
  }
  return t.str();
}

std::string sweep_table_text(std::span<const SweepCell> cells) {
  const auto names = metric_names(cells);
  std::ostringstream out;
  out << "value";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  char buf[64];
  for (double v : distinct_values(cells)) {
    out << format_double(v);
    for (const auto& n : names) {
      auto s = sweep_stat(cells, v, n);
      if (s.runs == 0) {
        out << "\tNA";
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s.mean, s.std);
      out << '\t' << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<Theorem2Row> theorem2_rows(std::span<const SweepCell> cells) {
  std::vector<Theorem2Row> rows;
  for (double v : distinct_values(cells)) {
    Theorem2Row r;
    r.lambda = v;
    r.robust_risk = sweep_stat(cells, v, "robust_risk").mean;
    r.mcat_objective = sweep_stat(cells, v, "mcat_objective").mean;
    r.manifold_term = sweep_stat(cells, v, "manifold_term").mean;
    auto gap = sweep_stat(cells, v, "gap");
    r.gap = gap.mean;
    r.runs = gap.runs;
    if (r.runs > 0) rows.push_back(r);
  }
  return rows;
}

Theorem2Fit fit_gap_bound(std::span<const Theorem2Row> rows) {
  Theorem2Fit fit;
  double num = 0.0, den = 0.0;
  for (const auto& r : rows) {
    if (!(r.lambda > 0.0)) throw ContractError("the gap bound is fitted over lambda > 0 only");
    num += r.gap / r.lambda;
    den += 1.0 / (r.lambda * r.lambda);
  }
  fit.c = den > 0.0 ? std::max(0.0, num / den) : 0.0;
  for (const auto& r : rows) {
    fit.residuals.push_back(fit.c / r.lambda - r.gap);
    fit.nonnegative += fit.residuals.back() >= -1e-12 * std::max(1.0, std::abs(r.gap));
  }
  fit.holds = !rows.empty() && 4 * fit.nonnegative >= 3 * rows.size();
  return fit;
}

std::string theorem2_csv(std::span<const Theorem2Row> rows, const Theorem2Fit& fit) {
  CsvTable t({"lambda", "runs", "robust_risk", "mcat_objective", "manifold_term", "gap", "bound_c_over_lambda",
              "residual"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    t.add_row({format_double(r.lambda), std::to_string(r.runs), format_double(r.robust_risk),
               format_double(r.mcat_objective), format_double(r.manifold_term), format_double(r.gap),
               format_double(fit.c / r.lambda), format_double(fit.residuals.at(i))});
  }
  return t.str();
}

std::vector<Theorem2Row> theorem2_trend(const RunConfig& base, std::span<const double> lambdas,
                                        const LongTailDataset& train_set, const LongTailDataset& test) {
  for (double l : lambdas) {
    if (!(l > 0.0)) throw ContractError("theorem-2 trend needs lambda > 0");
  }
  RunConfig cfg = base;
  cfg.sweep.param = "lambda";
  cfg.sweep.values.assign(lambdas.begin(), lambdas.end());
  auto cells = run_sweep(cfg, train_set, test);
  return theorem2_rows(cells);
}

}  // namespace mcat
