// mcat: experiment runner.
//
//   mcat synth-data  --out DIR [data flags]
//   mcat pretrain-gen --out DIR [--config FILE] [flags]
//   mcat train       --out DIR [--config FILE] [--data DIR] [flags]
//   mcat attack-eval --checkpoint FILE --out DIR [--config FILE] [flags]
//   mcat certify     --checkpoint FILE --out DIR [--config FILE] [flags]
//   mcat sweep       --out DIR [--param NAME --values a,b,c --seeds 0,1,2] [flags]
//   mcat report      RUN_DIR... [--out DIR]
//
// Exit status: 0 success, 2 configuration error, 3 missing input, 1 other failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcat/error.hpp"
#include "mcat/experiment.hpp"
#include "mcat/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string data_dir;
  std::string checkpoint;
  json overrides = json::object();
};

std::string as_list(const std::string& v) {
  if (!v.empty() && v.front() == '[') return v;
  return "[" + v + "]";
}

void add_overrides(CLI::App* cmd, Common& c, bool data_only = false) {
  struct Flag {
    const char* name;
    const char* path;
    const char* help;
  };
  static const Flag data_flags[] = {
      {"--C", "data.C", "number of classes"},
      {"--ir", "data.ir", "imbalance ratio n_max / n_min"},
      {"--n-max", "data.n_max", "samples in the largest class"},
      {"--d", "data.d", "input dimension"},
      {"--noise", "data.noise_sigma", "isotropic noise of the synthetic curves"},
      {"--test-per-class", "data.test_per_class", "balanced test samples per class"},
      {"--data-seed", "data.seed", "seed of the synthetic data"},
  };
  static const Flag run_flags[] = {
      {"--epsilon", "attack.epsilon", "l-inf budget"},
      {"--eta", "attack.eta", "attack step size"},
      {"--steps", "attack.steps", "training attack steps"},
      {"--lambda", "train.lambda", "manifold penalty weight"},
      {"--beta-geom", "geometry.beta_geom", "ETF regulariser weight"},
      {"--mode", "train.mode", "mcat or pgd_at"},
      {"--epochs", "train.epochs", "adversarial training epochs"},
      {"--batch-size", "train.batch_size", "minibatch size"},
      {"--lr", "train.lr", "base learning rate"},
      {"--latent-steps", "manifold.latent_steps", "latent descent steps T_z"},
      {"--train-csv", "data.train_csv", "training CSV (sets data.source=csv)"},
      {"--test-csv", "data.test_csv", "test CSV"},
  };
  auto add = [&](const Flag& f) {
    cmd->add_option_function<std::string>(
           f.name,
           [&c, f](const std::string& v) {
             if (std::string(f.path) == "data.train_csv" || std::string(f.path) == "data.test_csv") {
               mcat::set_override(c.overrides, f.path, json(v).dump());
               mcat::set_override(c.overrides, "data.source", "\"csv\"");
             } else {
               mcat::set_override(c.overrides, f.path, v);
             }
           },
           f.help)
        ->type_name("VALUE");
  };
  for (const auto& f : data_flags) add(f);
  cmd->add_option_function<std::string>(
         "--seed", [&c](const std::string& v) { mcat::set_override(c.overrides, "seeds", "[" + v + "]"); },
         "run seed")
      ->type_name("N");
  cmd->add_option_function<std::string>(
         "--seeds", [&c](const std::string& v) { mcat::set_override(c.overrides, "seeds", as_list(v)); },
         "comma-separated run seeds")
      ->type_name("LIST");
  if (!data_only) {
    for (const auto& f : run_flags) add(f);
    cmd->add_option("--config", c.config, "JSON configuration file")->type_name("FILE");
  }
  cmd->add_option_function<std::vector<std::string>>(
         "--set",
         [&c](const std::vector<std::string>& items) {
           for (const auto& item : items) {
             const auto eq = item.find('=');
             if (eq == std::string::npos) throw mcat::ConfigError("expected section.key=value", item);
             mcat::set_override(c.overrides, item.substr(0, eq), item.substr(eq + 1));
           }
         },
         "override any config leaf, e.g. --set train.warmup_epochs=3")
      ->type_name("KEY=VALUE");
  cmd->add_option("--out", c.out, "output directory")->required()->type_name("DIR");
}

mcat::RunConfig resolve(const Common& c, const json& fallback = json()) {
  json file = fallback.is_null() ? json::object() : fallback;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw mcat::IoError("config file not found: " + c.config);
    const std::string text = mcat::read_file(c.config);
    return mcat::resolve_config_text(text, c.overrides);
  }
  return mcat::resolve_config(file, c.overrides);
}

void print_metrics(const std::vector<std::pair<std::string, double>>& rows, std::size_t limit = 16) {
  for (std::size_t i = 0; i < rows.size() && i < limit; ++i) {
    std::printf("%-24s %s\n", rows[i].first.c_str(), mcat::format_double(rows[i].second).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manifold-constrained adversarial training laboratory"};
  app.require_subcommand(1);
  Common c;
  std::string param, values;
  std::vector<std::string> runs;

  auto* synth = app.add_subcommand("synth-data", "write a synthetic long-tailed train/test pair");
  add_overrides(synth, c, true);
  auto* pretrain = app.add_subcommand("pretrain-gen", "clean warm-up and class generator pretraining");
  add_overrides(pretrain, c);
  pretrain->add_option("--data", c.data_dir, "directory with train.csv and test.csv")->type_name("DIR");
  auto* trn = app.add_subcommand("train", "adversarial training followed by evaluation");
  add_overrides(trn, c);
  trn->add_option("--data", c.data_dir, "directory with train.csv and test.csv")->type_name("DIR");
  auto* eval = app.add_subcommand("attack-eval", "clean / FGSM / PGD evaluation of a checkpoint");
  add_overrides(eval, c);
  eval->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required()->type_name("FILE");
  eval->add_option("--data", c.data_dir, "directory with train.csv and test.csv")->type_name("DIR");
  auto* cert = app.add_subcommand("certify", "margin certificates of a normalised checkpoint");
  add_overrides(cert, c);
  cert->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required()->type_name("FILE");
  cert->add_option("--data", c.data_dir, "directory with train.csv and test.csv")->type_name("DIR");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate over a parameter grid and seeds");
  add_overrides(sweep, c);
  sweep->add_option("--param", param, "lambda, beta_geom or latent_steps");
  sweep->add_option("--values", values, "comma-separated values")->type_name("LIST");
  sweep->add_option("--data", c.data_dir, "directory with train.csv and test.csv")->type_name("DIR");
  auto* report = app.add_subcommand("report", "compare metrics.csv of several run directories");
  report->add_option("runs", runs, "run directories")->required();
  report->add_option("--out", c.out, "directory for report.csv")->type_name("DIR");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? 0 : 2;
    }
    if (!c.data_dir.empty()) {
      const fs::path dir(c.data_dir);
      mcat::set_override(c.overrides, "data.source", "\"csv\"");
      mcat::set_override(c.overrides, "data.train_csv", json((dir / "train.csv").string()).dump());
      mcat::set_override(c.overrides, "data.test_csv", json((dir / "test.csv").string()).dump());
    }
    if (!param.empty()) mcat::set_override(c.overrides, "sweep.param", json(param).dump());
    if (!values.empty()) mcat::set_override(c.overrides, "sweep.values", as_list(values));

    if (*synth) {
      auto cfg = resolve(c);
      mcat::run_synth_data(cfg, c.out);
      std::printf("wrote %s/train.csv and %s/test.csv\n", c.out.c_str(), c.out.c_str());
    } else if (*pretrain) {
      mcat::run_pretrain(resolve(c), c.out);
      std::printf("wrote %s/checkpoints/pretrained.ckpt\n", c.out.c_str());
    } else if (*trn) {
      auto rep = mcat::run_train(resolve(c), c.out);
      print_metrics(rep.rows());
    } else if (*eval) {
      auto cfg = resolve(c, mcat::checkpoint_config(c.checkpoint));
      auto rep = mcat::run_attack_eval(cfg, c.checkpoint, c.out);
      print_metrics(rep.rows());
    } else if (*cert) {
      auto cfg = resolve(c, mcat::checkpoint_config(c.checkpoint));
      auto s = mcat::run_certify(cfg, c.checkpoint, c.out);
      std::printf("lipschitz_upper %s\ncertified %zu\nfalsified %zu of %zu\ntheorem1 %s (%zu counterexamples)\n",
                  mcat::format_double(s.lipschitz.upper).c_str(), s.cert.certified(), s.falsification.flipped,
                  s.falsification.attacked, s.theorem1.holds ? "holds" : "violated",
                  s.theorem1.counterexamples.size());
    } else if (*sweep) {
      auto cfg = resolve(c);
      mcat::run_sweep_dir(cfg, c.out);
      std::fputs(mcat::read_file(fs::path(c.out) / "sweep.txt").c_str(), stdout);
    } else if (*report) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      const std::string table = mcat::compare_runs(dirs);
      if (!c.out.empty()) mcat::write_file_atomic(fs::path(c.out) / "report.csv", table);
      std::fputs(table.c_str(), stdout);
    }
    return 0;
  } catch (const mcat::ConfigError& e) {
    std::fprintf(stderr, "mcat: config error: %s\n", e.what());
    return 2;
  } catch (const mcat::IoError& e) {
    std::fprintf(stderr, "mcat: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mcat: %s\n", e.what());
    return 1;
  }
}
