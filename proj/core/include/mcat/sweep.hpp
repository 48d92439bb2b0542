#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcat/config.hpp"
#include "mcat/data.hpp"

namespace mcat {

/// Held-out estimates behind the robust-risk bound.
struct RiskEstimate {
  double robust_risk = 0.0;     // mean CE at PGD points
  double mcat_objective = 0.0;  // mean [CE + lambda d_{M_y}] at MS-PGD points
  double manifold_term = 0.0;   // mean lambda d_{M_y} at MS-PGD points
  double gap = 0.0;             // robust_risk - mcat_objective
  double ms_drift = 0.0;        // mean Delta d at the MS-PGD points
  std::vector<double> robust_terms;
  std::vector<double> mcat_terms;
};

/// Both attacks use `attack` (its lambda replaced by 0 and `lambda`
/// respectively); latent warm starts come from a fresh cache seeded by `seed`.
RiskEstimate estimate_risks(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                            std::span<const std::size_t> ids, const AttackConfig& attack, double lambda,
                            std::uint64_t seed);

/// `base` with the sweep parameter set to `value`. Sweeping lambda or
/// beta_geom puts the run in mcat mode.
RunConfig with_param(const RunConfig& base, const std::string& param, double value);

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& name) const;
};

/// One train + evaluate job per (value, seed) from base.sweep and base.seeds.
/// Failed jobs are kept with ok = false and their error message; no values
/// are filled in for them.
std::vector<SweepCell> run_sweep(const RunConfig& base, const LongTailDataset& train, const LongTailDataset& test);

/// One train + evaluate job; the metrics reported per sweep cell.
std::vector<std::pair<std::string, double>> run_cell(const RunConfig& cfg, std::uint64_t seed,
                                                     const LongTailDataset& train, const LongTailDataset& test);

struct SweepStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t runs = 0;
};

/// Mean and std of `metric` over the successful cells with `value`.
SweepStat sweep_stat(std::span<const SweepCell> cells, double value, const std::string& metric);

std::string sweep_cells_csv(std::span<const SweepCell> cells);
/// value,runs,failed then <metric>_mean,<metric>_std per metric.
std::string sweep_table_csv(std::span<const SweepCell> cells);
/// The same table with "mean ± std" cells.
std::string sweep_table_text(std::span<const SweepCell> cells);

struct Theorem2Row {
  double lambda = 0.0;
  double robust_risk = 0.0;
  double mcat_objective = 0.0;
  double manifold_term = 0.0;
  double gap = 0.0;
  std::size_t runs = 0;
};

struct Theorem2Fit {
  double c = 0.0;  // least-squares fit of gap ~ c / lambda, clipped at 0
  std::vector<double> residuals;  // c / lambda - gap
  std::size_t nonnegative = 0;
  bool holds = false;  // residuals >= 0 on at least three quarters of the rows
};

std::vector<Theorem2Row> theorem2_rows(std::span<const SweepCell> cells);
Theorem2Fit fit_gap_bound(std::span<const Theorem2Row> rows);
std::string theorem2_csv(std::span<const Theorem2Row> rows, const Theorem2Fit& fit);

/// Trains one mcat model per (lambda, seed) and tabulates the risk estimates.
/// ContractError for lambda <= 0.
std::vector<Theorem2Row> theorem2_trend(const RunConfig& base, std::span<const double> lambdas,
                                        const LongTailDataset& train, const LongTailDataset& test);

}  // namespace mcat
