#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcat/attacks.hpp"
#include "mcat/data.hpp"
#include "mcat/nets.hpp"

namespace mcat {

struct BalancedAccuracy {
  double ba = 0.0;
  double br = 0.0;
  std::vector<double> per_class_clean;
  std::vector<double> per_class_robust;
};

/// Unweighted per-class means of clean and robust correctness.
/// MetricError when a class has no samples.
BalancedAccuracy balanced_metrics(std::span<const int> labels, const std::vector<bool>& clean_correct,
                                  const std::vector<bool>& adv_correct, std::size_t classes);

/// Per-sample evaluation record.
struct AttackRecord {
  std::size_t id = 0;
  int label = 0;
  Group group = Group::head;
  bool clean_correct = false;
  bool adv_correct = false;
  double margin = 0.0;  // raw-logit margin at x_adv
  double drift = 0.0;   // valid only when the model has generators
};

struct GroupMetrics {
  std::size_t classes = 0;
  std::size_t samples = 0;
  double clean_acc = 0.0;  // mean of the group's per-class accuracies
  double robust_acc = 0.0;
  double drift_mean = 0.0;
  double drift_median = 0.0;
  double drift_q90 = 0.0;
};

struct MetricsReport {
  std::size_t samples = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;  // PGD (evaluation strength)
  double fgsm_acc = 0.0;
  double ba = 0.0;
  double br = 0.0;
  double robust_ce = 0.0;  // mean cross-entropy of the scaled logits at the PGD points
  std::vector<double> per_class_clean;
  std::vector<double> per_class_robust;
  std::array<GroupMetrics, 3> groups{};  // head, medium, tail
  bool has_drift = false;
  double drift_mean = 0.0;
  double theta_min_deg = 0.0;
  double etf_error = 0.0;
  std::vector<AttackRecord> records;

  /// (metric, value) pairs in a fixed order.
  std::vector<std::pair<std::string, double>> rows() const;
  std::string csv() const;
  std::string records_csv() const;
};

struct EvalConfig {
  AttackConfig attack;        // lambda is ignored: evaluation uses plain PGD
  std::size_t chunk = 64;     // rows per parallel job
  std::uint64_t seed = 0;     // latent warm starts for drift
};

/// Clean, FGSM and PGD evaluation of `model` on `test`; class groups come
/// from `groups` (the training set's bands). Chunks run on worker threads;
/// the result does not depend on the worker count.
MetricsReport evaluate(const ModelBundle& model, const LongTailDataset& test, std::span<const Group> groups,
                       const EvalConfig& cfg);

/// Linear-interpolated quantile of `values` (copied and sorted), q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace mcat
