// hypcd command line: synth, train, eval, gradcheck, ablate, export-embeddings.

#include "hypcd/config.hpp"
#include "hypcd/dataset.hpp"
#include "hypcd/errors.hpp"
#include "hypcd/gradcheck.hpp"
#include "hypcd/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <iostream>
#include <optional>

using namespace hypcd;
using nlohmann::json;

namespace {

// Flags that override TrainConfig fields.
struct Overrides {
  std::optional<std::string> method, space, profile, config_path;
  std::optional<double> curvature, clip, alpha_d_max, lambda_b;
  std::optional<int> epochs, batch_size, dim;
  std::optional<std::uint64_t> seed;
  // --tau-unsup style flags for the remaining config keys.
  std::map<std::string, std::optional<std::string>> generic;

  void attach(CLI::App* app) {
    app->add_option("--method", method, "gcd | simgcd | selex");
    app->add_option("--space", space, "euclidean | hyperbolic");
    app->add_option("--profile", profile, "fine_grained | generic");
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--curvature", curvature, "ball curvature c");
    app->add_option("--clip", clip, "feature clip radius r");
    app->add_option("--alpha-d-max", alpha_d_max, "final distance-term weight");
    app->add_option("--lambda-b", lambda_b, "supervised loss weight");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--dim", dim, "projector output width");
    static const std::set<std::string> named = {"method", "space", "profile", "curvature", "clip",
                                                "alpha_d_max", "lambda_b", "epochs", "batch_size", "seed"};
    for (const std::string& key : config_keys()) {
      if (named.count(key)) continue;
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option(flag, generic[key], "config key " + key);
    }
  }

  TrainConfig resolve() const {
    const json doc = config_path ? read_config_file(*config_path) : json();
    std::optional<Profile> p;
    if (profile) p = parse_profile(*profile);
    TrainConfig cfg = resolve_config(doc, p);
    for (const auto& [key, raw] : generic) {
      if (!raw) continue;
      // Numbers and booleans parse as JSON; anything else stays a string.
      json v = json::parse(*raw, nullptr, false);
      if (v.is_discarded() || v.is_object() || v.is_array()) v = *raw;
      apply_json(cfg, json{{key, v}});
    }
    if (method) cfg.method = parse_method(*method);
    if (space) cfg.space = parse_space(*space);
    if (curvature) cfg.curvature = *curvature;
    if (clip) cfg.clip = *clip;
    if (alpha_d_max) cfg.alpha_d_max = *alpha_d_max;
    if (lambda_b) cfg.lambda_b = *lambda_b;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (seed) cfg.seed = *seed;
    if (dim) cfg.proj_dim = *dim;
    cfg.validate();
    return cfg;
  }
};

void print_report(const json& metrics) {
  std::printf("acc_all=%.4f acc_old=%.4f acc_new=%.4f\n", metrics["acc_all"].get<double>(),
              metrics["acc_old"].get<double>(), metrics["acc_new"].get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic generalized category discovery"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic tree dataset");
  std::string synth_out;
  data::SynthParams sp;
  double old_fraction = 0.5, labelled_fraction = 0.5;
  synth->add_option("--out", synth_out, "output prefix")->required();
  synth->add_option("--classes", sp.num_classes, "number of classes K");
  synth->add_option("--depth", sp.tree_depth, "tree depth");
  synth->add_option("--dim", sp.dim, "feature width");
  synth->add_option("--per-class", sp.per_class, "samples per class");
  synth->add_option("--noise", sp.noise, "per-coordinate sample noise");
  synth->add_option("--step", sp.step, "per-coordinate tree step");
  synth->add_option("--old-fraction", old_fraction, "fraction of classes that are old");
  synth->add_option("--labelled-fraction", labelled_fraction, "fraction of old-class rows labelled");
  synth->add_option("--seed", sp.seed, "random seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and report accuracy");
  std::string data_prefix, ckpt_dir, metrics_path;
  Overrides train_ov;
  train_cmd->add_option("--data", data_prefix, "dataset prefix")->required();
  train_cmd->add_option("--out", ckpt_dir, "checkpoint directory");
  train_cmd->add_option("--metrics", metrics_path, "metrics JSON path");
  train_ov.attach(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_metrics;
  eval_cmd->add_option("--data", eval_data, "dataset prefix")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--metrics", eval_metrics, "report JSON path");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  int gc_configs = 20;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  gc_cmd->add_option("--configs", gc_configs, "random configurations per loss");
  gc_cmd->add_option("--seed", gc_seed, "random seed");
  gc_cmd->add_option("--tol", gc_tol, "relative error tolerance");

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "curvature x clip grid, or a space comparison");
  std::string ab_data, ab_out = "ablation";
  std::vector<double> ab_c{0.01, 0.05, 0.1}, ab_r{1.0, 1.5, 2.3};
  bool compare = false;
  Overrides ab_ov;
  ab_cmd->add_option("--data", ab_data, "dataset prefix")->required();
  ab_cmd->add_option("--out", ab_out, "output directory");
  ab_cmd->add_option("--curvatures", ab_c, "curvature values")->delimiter(',');
  ab_cmd->add_option("--clips", ab_r, "clip values")->delimiter(',');
  ab_cmd->add_flag("--compare-spaces", compare, "run euclidean and hyperbolic and report the delta");
  ab_ov.attach(ab_cmd);

  // export-embeddings
  auto* ex_cmd = app.add_subcommand("export-embeddings", "write encoder features and ball coordinates");
  std::string ex_data, ex_ckpt, ex_out, ex_space;
  ex_cmd->add_option("--data", ex_data, "dataset prefix")->required();
  ex_cmd->add_option("--checkpoint", ex_ckpt, "checkpoint directory")->required();
  ex_cmd->add_option("--out", ex_out, "output prefix")->required();
  ex_cmd->add_option("--space", ex_space, "euclidean | hyperbolic (default: checkpoint space)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      data::GcdDataset ds;
      try {
        ds = data::split_dataset(data::synth_dataset(sp), old_fraction, labelled_fraction, sp.seed);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      data::save_dataset(synth_out, ds);
      std::printf("wrote %s: %ld rows, %d classes (%d old), %zu labelled\n", synth_out.c_str(),
                  static_cast<long>(ds.size()), ds.num_classes, ds.num_old(), ds.num_labelled());
      if (ds.discovery_empty()) std::fprintf(stderr, "warning: every row is labelled; discovery set is empty\n");
    } else if (*train_cmd) {
      const TrainConfig cfg = train_ov.resolve();
      const data::GcdDataset ds = data::load_features(data_prefix);
      const train::TrainResult res = train::train_run(ds, cfg);
      if (!ckpt_dir.empty()) train::save_checkpoint(ckpt_dir, res.checkpoint);
      if (!metrics_path.empty()) train::write_json(metrics_path, res.metrics);
      print_report(res.metrics);
    } else if (*eval_cmd) {
      const data::GcdDataset ds = data::load_features(eval_data);
      const train::Checkpoint ck = train::load_checkpoint(eval_ckpt);
      const assignment::AccReport r = train::eval_run(ds, ck);
      json report{{"acc_all", r.acc_all}, {"acc_old", r.acc_old}, {"acc_new", r.acc_new},
                  {"n_old", r.n_old},     {"n_new", r.n_new}};
      if (!eval_metrics.empty()) train::write_json(eval_metrics, report);
      print_report(report);
    } else if (*gc_cmd) {
      bool ok = true;
      for (const auto& lc : gradcheck::run_suite(gc_configs, gc_seed, gc_tol)) {
        std::printf("%-32s %s configs=%d failures=%d max_rel_err=%.3e\n", lc.name.c_str(), lc.pass() ? "PASS" : "FAIL",
                    lc.configs, lc.failures, lc.max_rel_err);
        ok = ok && lc.pass();
      }
      return ok ? 0 : 1;
    } else if (*ab_cmd) {
      const TrainConfig cfg = ab_ov.resolve();
      const data::GcdDataset ds = data::load_features(ab_data);
      if (compare) {
        std::filesystem::create_directories(ab_out);
        const json rep = train::compare_spaces(ds, cfg);
        train::write_json(std::filesystem::path(ab_out) / "compare.json", rep);
        std::printf("euclidean acc_all=%.4f hyperbolic acc_all=%.4f delta=%+.4f\n",
                    rep["euclidean"]["acc_all"].get<double>(), rep["hyperbolic"]["acc_all"].get<double>(),
                    rep["delta"]["acc_all"].get<double>());
      } else {
        for (const auto& cell : train::ablate(ds, cfg, ab_c, ab_r, ab_out))
          std::printf("c=%g r=%g acc_all=%.4f -> %s\n", cell.curvature, cell.clip,
                      cell.metrics["acc_all"].get<double>(), cell.path.string().c_str());
      }
    } else if (*ex_cmd) {
      const data::GcdDataset ds = data::load_features(ex_data);
      const train::Checkpoint ck = train::load_checkpoint(ex_ckpt);
      train::export_embeddings(ds, ck, ex_out, ex_space.empty() ? to_string(ck.config.space) : ex_space);
      std::printf("wrote %s.*\n", ex_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
