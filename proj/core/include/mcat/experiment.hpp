#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcat/certify.hpp"
#include "mcat/config.hpp"
#include "mcat/data.hpp"
#include "mcat/lipschitz.hpp"
#include "mcat/metrics.hpp"
#include "mcat/sweep.hpp"

// Run directories. Every command first writes config.resolved.json, then its
// artifacts (each written to a temporary file and renamed into place):
//
//   train_log.csv       per-epoch losses, probe accuracies and geometry
//   metrics.csv         metric,value rows
//   attack_records.csv  per-sample evaluation records
//   cert.csv            per-sample certificates (normalised models)
//   checkpoints/        model checkpoints
//   summary.json        machine-readable summary
//   timings.csv         wall-clock times (the only non-reproducible file)

namespace mcat {

namespace fs = std::filesystem;

struct Datasets {
  LongTailDataset train;
  LongTailDataset test;
};

/// Synthetic data from data.* or the two CSV files. IoError when a CSV is
/// missing, ConfigError when its shape disagrees with data.C / data.d.
Datasets load_datasets(const RunConfig& cfg);

void write_resolved_config(const RunConfig& cfg, const fs::path& out);

/// train.csv / test.csv with metadata sidecars.
void run_synth_data(const RunConfig& cfg, const fs::path& out);

/// Warm-up and generator pretraining; writes checkpoints/pretrained.ckpt and
/// the per-class pretraining losses to metrics.csv.
void run_pretrain(const RunConfig& cfg, const fs::path& out);

/// Full training run with the first seed, followed by evaluation on the test
/// split (and certification when the model is normalised).
MetricsReport run_train(const RunConfig& cfg, const fs::path& out);

/// Evaluation of a checkpoint on the configured test split.
MetricsReport run_attack_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out);

struct CertSummary {
  LipschitzBound lipschitz;
  CertResult cert;
  Falsification falsification;
  Theorem1Check theorem1;
};

/// Certificates, attack-based falsification and the margin-theorem check for
/// a normalised checkpoint on the test split.
CertSummary run_certify(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out);

/// Sweep over cfg.sweep.values x cfg.seeds; writes sweep_cells.csv,
/// sweep.csv, sweep.txt and, for lambda sweeps, theorem2.csv (lambda > 0 rows).
std::vector<SweepCell> run_sweep_dir(const RunConfig& cfg, const fs::path& out);

/// Side-by-side metrics.csv values of several run directories with deltas
/// against the first run.
std::string compare_runs(const std::vector<fs::path>& runs);

/// Config stored in a checkpoint header, when present.
nlohmann::json checkpoint_config(const fs::path& checkpoint);

}  // namespace mcat
