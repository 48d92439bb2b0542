#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcat/metrics.hpp"
#include "mcat/trainer.hpp"

namespace mcat {

struct DataConfig {
  std::string source = "synth";  // "synth" or "csv"
  std::string train_csv;
  std::string test_csv;
  std::size_t classes = 10;
  std::size_t dim = 16;
  std::size_t n_max = 300;
  double ir = 50.0;
  std::size_t test_per_class = 100;
  double noise_sigma = 0.03;
  std::optional<std::pair<double, double>> input_box;
  std::uint64_t seed = 0;
};

struct EvalSection {
  std::size_t attack_steps = 20;
  std::size_t cert_attack_steps = 100;
  std::size_t lipschitz_trials = 20;
  std::vector<double> theorem1_fractions{0.25, 0.5, 0.75, 0.95};
  std::size_t theorem1_steps = 20;
  std::size_t chunk = 64;
};

struct SweepSection {
  std::string param = "lambda";  // "lambda", "beta_geom" or "latent_steps"
  std::vector<double> values{0.0, 0.05, 0.1, 0.5};
};

/// Fully resolved experiment configuration. `train.seed` is unused here; the
/// run seeds are `seeds`.
struct RunConfig {
  DataConfig data;
  TrainConfig train;
  EvalSection eval;
  SweepSection sweep;
  std::vector<std::uint64_t> seeds{0};

  /// Library defaults, except that the model runs on the unit sphere with
  /// logit scale 8.
  RunConfig();

  nlohmann::json to_json() const;
  /// Training configuration for one seed (model dims taken from data).
  TrainConfig train_config(std::uint64_t seed) const;
  /// Evaluation attack: the training attack with eval.attack_steps steps.
  EvalConfig eval_config(std::uint64_t seed) const;
};

/// The defaults as a JSON document; it doubles as the schema (key set and
/// value types) for configuration files.
nlohmann::json default_config_json();

/// Resolves defaults < file < overrides. Both documents follow the schema;
/// unknown keys and type mismatches raise ConfigError with the field path.
/// In pgd_at mode an explicitly set positive train.lambda or
/// geometry.beta_geom is an error; otherwise both are forced to 0.
RunConfig resolve_config(const nlohmann::json& file, const nlohmann::json& overrides = nlohmann::json::object());

/// Parses `text` (empty means {}) and resolves it. ConfigError on JSON syntax errors.
RunConfig resolve_config_text(std::string_view text, const nlohmann::json& overrides = nlohmann::json::object());

/// Sets `path` ("section.key") in `doc` to `value`, parsed as JSON when
/// possible and kept as a string otherwise.
void set_override(nlohmann::json& doc, std::string_view path, std::string_view value);

}  // namespace mcat
