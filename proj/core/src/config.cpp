#include "mcat/config.hpp"

#include <algorithm>
#include <array>

#include "mcat/error.hpp"

namespace mcat {

using nlohmann::json;

RunConfig::RunConfig() {
  train.model.normalize_output = true;
  train.model.normalize_rows = true;
  train.model.logit_scale = 8.0;
}

json default_config_json() {
  const RunConfig d;
  return d.to_json();
}

json RunConfig::to_json() const {
  json j;
  j["data"] = {{"source", data.source},
               {"train_csv", data.train_csv},
               {"test_csv", data.test_csv},
               {"C", data.classes},
               {"d", data.dim},
               {"n_max", data.n_max},
               {"ir", data.ir},
               {"test_per_class", data.test_per_class},
               {"noise_sigma", data.noise_sigma},
               {"input_box", data.input_box ? json::array({data.input_box->first, data.input_box->second}) : json()},
               {"seed", data.seed}};
  j["model"] = {{"hidden", train.model.hidden},
                {"feature_dim", train.model.feature_dim},
                {"normalize_output", train.model.normalize_output},
                {"normalize_rows", train.model.normalize_rows},
                {"logit_scale", train.model.logit_scale}};
  j["manifold"] = {{"latent_dim", train.pretrain.latent_dim},
                   {"gen_hidden", train.pretrain.hidden},
                   {"latent_steps", train.attack.latent.steps},
                   {"latent_lr", train.attack.latent.lr},
                   {"pretrain_steps", train.pretrain.steps},
                   {"pretrain_lr", train.pretrain.lr},
                   {"pretrain_batch", train.pretrain.batch}};
  j["geometry"] = {{"beta_geom", train.beta_geom}};
  j["attack"] = {{"epsilon", train.attack.epsilon},
                 {"eta", train.attack.eta},
                 {"steps", train.attack.steps},
                 {"rand_init", train.attack.rand_init},
                 {"step_rule", train.attack.step_rule == StepRule::sign ? "sign" : "raw"}};
  j["train"] = {{"mode", to_string(train.mode)},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr", train.sgd.lr},
                {"momentum", train.sgd.momentum},
                {"weight_decay", train.sgd.weight_decay},
                {"cosine", train.cosine},
                {"lambda", train.lambda},
                {"warmup_epochs", train.warmup_epochs},
                {"checkpoint_every", train.checkpoint_every},
                {"probe_size", train.probe_size}};
  j["eval"] = {{"attack_steps", eval.attack_steps},
               {"cert_attack_steps", eval.cert_attack_steps},
               {"lipschitz_trials", eval.lipschitz_trials},
               {"theorem1_fractions", eval.theorem1_fractions},
               {"theorem1_steps", eval.theorem1_steps},
               {"chunk", eval.chunk}};
  j["sweep"] = {{"param", sweep.param}, {"values", sweep.values}};
  j["seeds"] = seeds;
  return j;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
  TrainConfig t = train;
  t.seed = seed;
  t.model.input_dim = data.dim;
  t.model.num_classes = data.classes;
  t.attack.input_box = data.input_box;
  return t;
}

EvalConfig RunConfig::eval_config(std::uint64_t seed) const {
  EvalConfig e;
  e.attack = train.attack;
  e.attack.input_box = data.input_box;
  e.attack.steps = eval.attack_steps;
  e.attack.lambda = 0.0;
  e.attack.seed = seed;
  e.chunk = eval.chunk;
  e.seed = seed;
  return e;
}

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

bool is_unsigned(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void check_value(const json& schema, const json& v, const std::string& path) {
  if (path == "data.input_box") {
    if (v.is_null()) return;
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError("expected null or [lo, hi]", path);
    }
    return;
  }
  if (schema.is_boolean()) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean", path);
  } else if (schema.is_string()) {
    if (!v.is_string()) throw ConfigError("expected a string", path);
  } else if (schema.is_number_unsigned() || schema.is_number_integer()) {
    if (!is_unsigned(v)) throw ConfigError("expected a non-negative integer", path);
  } else if (schema.is_number()) {
    if (!v.is_number()) throw ConfigError("expected a number", path);
  } else if (schema.is_array()) {
    if (!v.is_array()) throw ConfigError("expected an array", path);
    const bool integral = path == "model.hidden" || path == "manifold.gen_hidden" || path == "seeds";
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      if (integral ? !is_unsigned(v[i]) : !v[i].is_number()) {
        throw ConfigError(integral ? "expected a non-negative integer" : "expected a number", p);
      }
    }
  }
}

void merge(json& target, const json& src, const json& schema, const std::string& prefix, std::vector<std::string>& seen) {
  if (!src.is_object()) throw ConfigError("expected an object", prefix.empty() ? "<root>" : prefix);
  for (const auto& [key, value] : src.items()) {
    const std::string path = join(prefix, key);
    if (!schema.contains(key)) throw ConfigError("unknown key", path);
    const json& s = schema.at(key);
    if (s.is_object()) {
      merge(target[key], value, s, path, seen);
    } else {
      check_value(s, value, path);
      target[key] = value;
      seen.push_back(path);
    }
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  return j.at(section).at(key).get<T>();
}

void require_one_of(const std::string& v, std::initializer_list<const char*> options, const char* path) {
  for (const char* o : options) {
    if (v == o) return;
  }
  std::string msg = "must be one of";
  for (const char* o : options) msg += std::string(" ") + o;
  throw ConfigError(msg + ", got '" + v + "'", path);
}

RunConfig from_json(const json& j, const std::vector<std::string>& explicit_paths) {
  RunConfig c;
  c.data.source = get<std::string>(j, "data", "source");
  require_one_of(c.data.source, {"synth", "csv"}, "data.source");
  c.data.train_csv = get<std::string>(j, "data", "train_csv");
  c.data.test_csv = get<std::string>(j, "data", "test_csv");
  c.data.classes = get<std::size_t>(j, "data", "C");
  c.data.dim = get<std::size_t>(j, "data", "d");
  c.data.n_max = get<std::size_t>(j, "data", "n_max");
  c.data.ir = get<double>(j, "data", "ir");
  c.data.test_per_class = get<std::size_t>(j, "data", "test_per_class");
  c.data.noise_sigma = get<double>(j, "data", "noise_sigma");
  const json& box = j.at("data").at("input_box");
  if (box.is_null()) {
    c.data.input_box.reset();
  } else {
    c.data.input_box = std::make_pair(box[0].get<double>(), box[1].get<double>());
  }
  c.data.seed = get<std::uint64_t>(j, "data", "seed");
  if (c.data.classes < 2) throw ConfigError("need at least two classes", "data.C");
  if (c.data.dim < 2) throw ConfigError("need at least two input dimensions", "data.d");
  if (!(c.data.ir >= 1.0)) throw ConfigError("imbalance ratio must be >= 1", "data.ir");
  if (c.data.noise_sigma < 0.0) throw ConfigError("must be >= 0", "data.noise_sigma");
  if (c.data.source == "csv" && c.data.train_csv.empty()) throw ConfigError("csv source needs a path", "data.train_csv");

  auto& m = c.train.model;
  m.hidden = get<std::vector<std::size_t>>(j, "model", "hidden");
  m.feature_dim = get<std::size_t>(j, "model", "feature_dim");
  m.normalize_output = get<bool>(j, "model", "normalize_output");
  m.normalize_rows = get<bool>(j, "model", "normalize_rows");
  m.logit_scale = get<double>(j, "model", "logit_scale");
  m.input_dim = c.data.dim;
  m.num_classes = c.data.classes;
  if (m.feature_dim == 0) throw ConfigError("must be positive", "model.feature_dim");
  if (std::find(m.hidden.begin(), m.hidden.end(), std::size_t{0}) != m.hidden.end()) {
    throw ConfigError("widths must be positive", "model.hidden");
  }
  if (!(m.logit_scale > 0.0)) throw ConfigError("must be positive", "model.logit_scale");

  auto& p = c.train.pretrain;
  p.latent_dim = get<std::size_t>(j, "manifold", "latent_dim");
  p.hidden = get<std::vector<std::size_t>>(j, "manifold", "gen_hidden");
  p.steps = get<std::size_t>(j, "manifold", "pretrain_steps");
  p.lr = get<double>(j, "manifold", "pretrain_lr");
  p.batch = get<std::size_t>(j, "manifold", "pretrain_batch");
  if (p.latent_dim == 0) throw ConfigError("must be positive", "manifold.latent_dim");
  if (std::find(p.hidden.begin(), p.hidden.end(), std::size_t{0}) != p.hidden.end()) {
    throw ConfigError("widths must be positive", "manifold.gen_hidden");
  }
  c.train.attack.latent.steps = get<std::size_t>(j, "manifold", "latent_steps");
  c.train.attack.latent.lr = get<double>(j, "manifold", "latent_lr");

  c.train.beta_geom = get<double>(j, "geometry", "beta_geom");

  auto& a = c.train.attack;
  a.epsilon = get<double>(j, "attack", "epsilon");
  a.eta = get<double>(j, "attack", "eta");
  a.steps = get<std::size_t>(j, "attack", "steps");
  a.rand_init = get<bool>(j, "attack", "rand_init");
  const auto rule = get<std::string>(j, "attack", "step_rule");
  require_one_of(rule, {"sign", "raw"}, "attack.step_rule");
  a.step_rule = rule == "sign" ? StepRule::sign : StepRule::raw;
  a.input_box = c.data.input_box;

  auto& t = c.train;
  const auto mode = get<std::string>(j, "train", "mode");
  require_one_of(mode, {"mcat", "pgd_at"}, "train.mode");
  t.mode = mode == "mcat" ? TrainMode::mcat : TrainMode::pgd_at;
  t.epochs = get<std::size_t>(j, "train", "epochs");
  t.batch_size = get<std::size_t>(j, "train", "batch_size");
  t.sgd.lr = get<double>(j, "train", "lr");
  t.sgd.momentum = get<double>(j, "train", "momentum");
  t.sgd.weight_decay = get<double>(j, "train", "weight_decay");
  t.cosine = get<bool>(j, "train", "cosine");
  t.lambda = get<double>(j, "train", "lambda");
  t.warmup_epochs = get<std::size_t>(j, "train", "warmup_epochs");
  t.checkpoint_every = get<std::size_t>(j, "train", "checkpoint_every");
  t.probe_size = get<std::size_t>(j, "train", "probe_size");

  if (t.mode == TrainMode::pgd_at) {
    auto is_explicit = [&](const char* path) {
      return std::find(explicit_paths.begin(), explicit_paths.end(), path) != explicit_paths.end();
    };
    if (is_explicit("train.lambda") && t.lambda > 0.0) {
      throw ConfigError("pgd_at mode forbids lambda > 0", "train.lambda");
    }
    if (is_explicit("geometry.beta_geom") && t.beta_geom > 0.0) {
      throw ConfigError("pgd_at mode forbids beta_geom > 0", "geometry.beta_geom");
    }
    t.lambda = 0.0;
    t.beta_geom = 0.0;
  }

  c.eval.attack_steps = get<std::size_t>(j, "eval", "attack_steps");
  c.eval.cert_attack_steps = get<std::size_t>(j, "eval", "cert_attack_steps");
  c.eval.lipschitz_trials = get<std::size_t>(j, "eval", "lipschitz_trials");
  c.eval.theorem1_fractions = get<std::vector<double>>(j, "eval", "theorem1_fractions");
  c.eval.theorem1_steps = get<std::size_t>(j, "eval", "theorem1_steps");
  c.eval.chunk = get<std::size_t>(j, "eval", "chunk");
  for (std::size_t i = 0; i < c.eval.theorem1_fractions.size(); ++i) {
    const double f = c.eval.theorem1_fractions[i];
    if (!(f > 0.0 && f < 1.0)) {
      throw ConfigError("must lie in (0, 1)", "eval.theorem1_fractions[" + std::to_string(i) + "]");
    }
  }

  c.sweep.param = get<std::string>(j, "sweep", "param");
  require_one_of(c.sweep.param, {"lambda", "beta_geom", "latent_steps"}, "sweep.param");
  c.sweep.values = j.at("sweep").at("values").get<std::vector<double>>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) throw ConfigError("at least one seed required", "seeds");

  c.train.seed = c.seeds.front();
  c.train.validate();
  return c;
}

}  // namespace

RunConfig resolve_config(const json& file, const json& overrides) {
  const json schema = default_config_json();
  json merged = schema;
  std::vector<std::string> seen;
  if (!file.is_null()) merge(merged, file, schema, "", seen);
  if (!overrides.is_null()) merge(merged, overrides, schema, "", seen);
  return from_json(merged, seen);
}

RunConfig resolve_config_text(std::string_view text, const json& overrides) {
  json file = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string_view::npos) {
    try {
      file = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what(), "<file>");
    }
  }
  return resolve_config(file, overrides);
}

void set_override(json& doc, std::string_view path, std::string_view value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = std::string(value);
  }
  json* node = &doc;
  std::string_view rest = path;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key(rest.substr(0, dot));
    if (key.empty()) throw ConfigError("empty key in override", std::string(path));
    if (dot == std::string_view::npos) {
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    if (!node->is_null() && !node->is_object()) throw ConfigError("not a section", std::string(path));
    rest = rest.substr(dot + 1);
  }
}

}  // namespace mcat
