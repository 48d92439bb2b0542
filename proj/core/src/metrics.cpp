#include "mcat/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mcat/error.hpp"
#include "mcat/geometry.hpp"
#include "mcat/io.hpp"
#include "mcat/ops.hpp"
#include "mcat/parallel.hpp"

namespace mcat {

BalancedAccuracy balanced_metrics(std::span<const int> labels, const std::vector<bool>& clean_correct,
                                  const std::vector<bool>& adv_correct, std::size_t classes) {
  if (classes < 1) throw MetricError("balanced metrics need at least one class");
  if (clean_correct.size() != labels.size() || adv_correct.size() != labels.size()) {
    throw DimensionError("balanced metrics: correctness tables do not match labels");
  }
  std::vector<std::size_t> total(classes, 0), clean(classes, 0), robust(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || c >= classes) throw MetricError("label " + std::to_string(labels[i]) + " out of range");
    ++total[c];
    clean[c] += clean_correct[i];
    robust[c] += adv_correct[i];
  }
  BalancedAccuracy out;
  for (std::size_t c = 0; c < classes; ++c) {
    if (total[c] == 0) throw MetricError("class " + std::to_string(c) + " has no test samples");
    out.per_class_clean.push_back(static_cast<double>(clean[c]) / static_cast<double>(total[c]));
    out.per_class_robust.push_back(static_cast<double>(robust[c]) / static_cast<double>(total[c]));
    out.ba += out.per_class_clean.back();
    out.br += out.per_class_robust.back();
  }
  out.ba /= static_cast<double>(classes);
  out.br /= static_cast<double>(classes);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<std::pair<std::string, double>> MetricsReport::rows() const {
  std::vector<std::pair<std::string, double>> r{
      {"samples", static_cast<double>(samples)},
      {"clean_acc", clean_acc},
      {"robust_acc", robust_acc},
      {"fgsm_acc", fgsm_acc},
      {"ba", ba},
      {"br", br},
      {"robust_ce", robust_ce},
      {"theta_min_deg", theta_min_deg},
      {"etf_error", etf_error},
  };
  if (has_drift) r.emplace_back("drift_mean", drift_mean);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].classes == 0) continue;
    const std::string name = to_string(static_cast<Group>(g));
    r.emplace_back(name + "_clean_acc", groups[g].clean_acc);
    r.emplace_back(name + "_robust_acc", groups[g].robust_acc);
    if (has_drift) {
      r.emplace_back(name + "_drift_mean", groups[g].drift_mean);
      r.emplace_back(name + "_drift_median", groups[g].drift_median);
      r.emplace_back(name + "_drift_q90", groups[g].drift_q90);
    }
  }
  for (std::size_t c = 0; c < per_class_clean.size(); ++c) {
    r.emplace_back("class_" + std::to_string(c) + "_clean_acc", per_class_clean[c]);
    r.emplace_back("class_" + std::to_string(c) + "_robust_acc", per_class_robust[c]);
  }
  return r;
}

std::string MetricsReport::csv() const {
  CsvTable t({"metric", "value"});
  for (const auto& [name, value] : rows()) t.add_row({name, format_double(value)});
  return t.str();
}

std::string MetricsReport::records_csv() const {
  CsvTable t({"id", "class", "group", "clean_correct", "adv_correct", "margin", "drift"});
  for (const auto& r : records) {
    t.add_row({std::to_string(r.id), std::to_string(r.label), to_string(r.group), r.clean_correct ? "1" : "0",
               r.adv_correct ? "1" : "0", format_double(r.margin), has_drift ? format_double(r.drift) : "NA"});
  }
  return t.str();
}

MetricsReport evaluate(const ModelBundle& model, const LongTailDataset& test, std::span<const Group> groups,
                       const EvalConfig& cfg) {
  const std::size_t n = test.size();
  const std::size_t classes = model.num_classes();
  if (n == 0) throw MetricError("evaluation set is empty");
  if (groups.size() != classes) throw DimensionError("one group tag per class required");
  if (test.num_classes() > classes) throw DimensionError("test labels exceed the classifier's classes");
  AttackConfig attack = cfg.attack;
  attack.lambda = 0.0;
  attack.validate();

  MetricsReport rep;
  rep.samples = n;
  rep.has_drift = model.has_generators();
  rep.records.resize(n);
  std::vector<bool> clean_ok(n), adv_ok(n), fgsm_ok(n);
  std::vector<double> ce(n);

  const std::size_t chunk = std::max<std::size_t>(cfg.chunk, 1);
  const std::size_t jobs = (n + chunk - 1) / chunk;
  std::vector<std::vector<char>> clean_slot(jobs), adv_slot(jobs), fgsm_slot(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t begin = job * chunk, end = std::min(n, begin + chunk);
    std::vector<std::size_t> ids(end - begin);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = begin + i;
    Tensor x = test.x.gather_rows(ids);
    std::vector<int> y(test.y.begin() + static_cast<std::ptrdiff_t>(begin),
                       test.y.begin() + static_cast<std::ptrdiff_t>(end));
    AttackBatch batch{x, y, ids};
    auto pred = predict(model, x);
    auto adv = pgd(model, batch, attack);
    auto f = fgsm(model, batch, attack.epsilon, attack.input_box);
    auto margins = logit_margins(model, adv.x_adv, y);
    std::vector<double> dd;
    if (rep.has_drift) dd = drift(model, x, adv.x_adv, y, ids, attack.latent, nullptr, cfg.seed);
    Tensor scores = logits(model.classifier, features(model.extractor, adv.x_adv));
    for (double& v : scores.data()) v *= model.logit_scale;
    auto ce_rows = cross_entropy_rows(scores, y);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t k = ids[i];
      AttackRecord& r = rep.records[k];
      r.id = k;
      r.label = y[i];
      r.group = groups[static_cast<std::size_t>(y[i])];
      r.clean_correct = pred[i] == y[i];
      r.adv_correct = !adv.success[i];
      r.margin = margins[i];
      r.drift = rep.has_drift ? dd[i] : 0.0;
      ce[k] = ce_rows[i];
      clean_slot[job].push_back(r.clean_correct);
      adv_slot[job].push_back(r.adv_correct);
      fgsm_slot[job].push_back(!f.success[i]);
    }
  });
  for (std::size_t job = 0, k = 0; job < jobs; ++job) {
    for (std::size_t i = 0; i < clean_slot[job].size(); ++i, ++k) {
      clean_ok[k] = clean_slot[job][i];
      adv_ok[k] = adv_slot[job][i];
      fgsm_ok[k] = fgsm_slot[job][i];
    }
  }

  std::size_t c_ok = 0, a_ok = 0, f_ok = 0;
  double ce_sum = 0.0, drift_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c_ok += clean_ok[i];
    a_ok += adv_ok[i];
    f_ok += fgsm_ok[i];
    ce_sum += ce[i];
    drift_sum += rep.records[i].drift;
  }
  const double nn = static_cast<double>(n);
  rep.clean_acc = static_cast<double>(c_ok) / nn;
  rep.robust_acc = static_cast<double>(a_ok) / nn;
  rep.fgsm_acc = static_cast<double>(f_ok) / nn;
  rep.robust_ce = ce_sum / nn;
  rep.drift_mean = rep.has_drift ? drift_sum / nn : 0.0;

  auto bal = balanced_metrics(test.y, clean_ok, adv_ok, classes);
  rep.ba = bal.ba;
  rep.br = bal.br;
  rep.per_class_clean = bal.per_class_clean;
  rep.per_class_robust = bal.per_class_robust;

  std::array<std::vector<double>, 3> group_drift;
  for (const auto& r : rep.records) group_drift[static_cast<std::size_t>(r.group)].push_back(r.drift);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& g = rep.groups[static_cast<std::size_t>(groups[c])];
    ++g.classes;
    g.clean_acc += bal.per_class_clean[c];
    g.robust_acc += bal.per_class_robust[c];
  }
  for (std::size_t k = 0; k < 3; ++k) {
    auto& g = rep.groups[k];
    if (g.classes == 0) continue;
    g.clean_acc /= static_cast<double>(g.classes);
    g.robust_acc /= static_cast<double>(g.classes);
    g.samples = group_drift[k].size();
    if (rep.has_drift && !group_drift[k].empty()) {
      double s = 0.0;
      for (double v : group_drift[k]) s += v;
      g.drift_mean = s / static_cast<double>(group_drift[k].size());
      g.drift_median = quantile(group_drift[k], 0.5);
      g.drift_q90 = quantile(group_drift[k], 0.9);
    }
  }
  const Tensor w = model.classifier.effective_weight();
  rep.theta_min_deg = theta_min(w);
  rep.etf_error = etf_alignment_error(w);
  return rep;
}

}  // namespace mcat
