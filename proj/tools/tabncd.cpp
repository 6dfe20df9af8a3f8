// tabncd: experiment driver.
//
//   tabncd run --manifest M --config C --out DIR
//   tabncd split --manifest M [--out DIR]
//   tabncd pretrain --manifest M --config C --out DIR
//   tabncd train --manifest M --config C --out DIR [--encoder CKPT]
//   tabncd eval --manifest M --checkpoint CKPT [--out FILE]
//   tabncd baseline --manifest M --config C --out DIR
//   tabncd export-embeddings --manifest M --checkpoint CKPT --out FILE [--seed S]
//   tabncd sweep-seeds --manifest M --config C --out DIR (--seeds N | --seed-list a,b,..)
//
// Exit codes: 0 ok, 1 unexpected, 2 configuration, 3 data, 4 training diverged.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tabncd/checkpoint.hpp"
#include "tabncd/errors.hpp"
#include "tabncd/experiment.hpp"
#include "tabncd/log.hpp"
#include "tabncd/metrics.hpp"

namespace fs = std::filesystem;
using namespace tabncd;

namespace {

enum Exit : int { kOk = 0, kUnexpected = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct Common {
  std::string manifest;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

DenseNet encoder_from(const fs::path& ckpt) {
  auto nets = load_checkpoint(ckpt);
  const auto it = nets.find("encoder");
  if (it == nets.end()) throw DataError("checkpoint " + ckpt.string() + " has no encoder");
  return std::move(it->second);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Novel class discovery on tabular data"};
  app.require_subcommand(1);

  Common c;
  std::string checkpoint;
  std::string encoder_ckpt;
  std::size_t n_seeds = 0;
  std::vector<std::uint64_t> seed_list;

  auto add_manifest = [&](CLI::App* s) { s->add_option("--manifest", c.manifest, "dataset manifest JSON")->required(); };
  auto add_config = [&](CLI::App* s) { s->add_option("--config", c.config, "run configuration JSON"); };
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", c.seed, "override the config seed"); };

  auto* run = app.add_subcommand("run", "full pipeline with baselines");
  add_manifest(run);
  add_config(run);
  add_seed(run);
  run->add_option("--out", c.out, "output directory")->required();

  auto* split = app.add_subcommand("split", "print or write the split summary");
  add_manifest(split);
  split->add_option("--out", c.out, "output directory");

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  add_manifest(pretrain);
  add_config(pretrain);
  add_seed(pretrain);
  pretrain->add_option("--out", c.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "joint training");
  add_manifest(train);
  add_config(train);
  add_seed(train);
  train->add_option("--out", c.out, "output directory")->required();
  train->add_option("--encoder", encoder_ckpt, "start from this encoder checkpoint instead of pretraining");

  auto* eval = app.add_subcommand("eval", "evaluate a joint checkpoint on the unlabeled test split");
  add_manifest(eval);
  eval->add_option("--checkpoint", checkpoint, "joint model checkpoint")->required();
  eval->add_option("--out", c.out, "metrics JSON file");

  auto* baseline = app.add_subcommand("baseline", "k-means and projection baselines");
  add_manifest(baseline);
  add_config(baseline);
  add_seed(baseline);
  baseline->add_option("--out", c.out, "output directory")->required();

  auto* exportc = app.add_subcommand("export-embeddings", "write latent coordinates of every row");
  add_manifest(exportc);
  add_seed(exportc);
  exportc->add_option("--checkpoint", checkpoint, "checkpoint holding an encoder")->required();
  exportc->add_option("--out", c.out, "CSV file")->required();

  auto* sweep = app.add_subcommand("sweep-seeds", "sequential runs over seeds with mean/std aggregate");
  add_manifest(sweep);
  add_config(sweep);
  sweep->add_option("--out", c.out, "output directory")->required();
  auto* n_opt = sweep->add_option("--seeds", n_seeds, "run seeds 0..N-1");
  auto* list_opt = sweep->add_option("--seed-list", seed_list, "explicit seeds")->delimiter(',');
  n_opt->excludes(list_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (run->parsed()) {
      const auto metrics = run_experiment(DatasetManifest::load(c.manifest), load_config(c), c.out);
      std::cout << metrics.dump(2) << '\n';
    } else if (split->parsed()) {
      const auto summary = split_summary(prepare_split(DatasetManifest::load(c.manifest)));
      if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_json(fs::path(c.out) / "split_summary.json", summary);
      }
      std::cout << summary.dump(2) << '\n';
    } else if (pretrain->parsed()) {
      const auto cfg = load_config(c);
      const auto s = prepare_split(DatasetManifest::load(c.manifest));
      fs::create_directories(c.out);
      auto pre = pretrain_encoder(s, cfg);
      write_json(fs::path(c.out) / "pretrain_log.json",
                 {{"seed", cfg.seed}, {"dataset", s.name}, {"epochs", to_json(pre.log)}});
      save_checkpoint(fs::path(c.out) / "encoder_pretrained.ckpt", {{"encoder", &pre.encoder}});
    } else if (train->parsed()) {
      const auto cfg = load_config(c);
      const auto s = prepare_split(DatasetManifest::load(c.manifest));
      fs::create_directories(c.out);
      DenseNet enc = encoder_ckpt.empty() ? pretrain_encoder(s, cfg).encoder : encoder_from(encoder_ckpt);
      auto trained = train_joint(s, std::move(enc), cfg, fs::path(c.out));
      nlohmann::json log = nlohmann::json::array();
      for (const auto& e : trained.log) log.push_back(to_json(e));
      write_json(fs::path(c.out) / "train_log.json", {{"seed", cfg.seed}, {"dataset", s.name}, {"epochs", log}});
      save_joint_model(trained.model, fs::path(c.out) / "model.ckpt");
    } else if (eval->parsed()) {
      const auto s = prepare_split(DatasetManifest::load(c.manifest));
      const auto model = load_joint_model(checkpoint);
      const auto report = to_json(evaluate_model(model, s), s.partition.unknown);
      if (!c.out.empty()) write_json(c.out, report);
      std::cout << report.dump(2) << '\n';
    } else if (baseline->parsed()) {
      const auto cfg = load_config(c);
      const auto s = prepare_split(DatasetManifest::load(c.manifest));
      fs::create_directories(c.out);
      auto metrics = run_baselines(s, cfg);
      metrics["dataset"] = s.name;
      metrics["seed"] = cfg.seed;
      write_json(fs::path(c.out) / "metrics.json", metrics);
      std::cout << metrics.dump(2) << '\n';
    } else if (exportc->parsed()) {
      const auto s = prepare_split(DatasetManifest::load(c.manifest));
      export_embeddings(encoder_from(checkpoint), s, c.out, c.seed.value_or(0));
    } else if (sweep->parsed()) {
      const auto cfg = load_config(c);
      if (seed_list.empty()) {
        if (n_seeds == 0) throw ConfigError("sweep-seeds needs --seeds N or --seed-list");
        seed_list.resize(n_seeds);
        std::iota(seed_list.begin(), seed_list.end(), std::uint64_t{0});
      }
      const auto manifest = DatasetManifest::load(c.manifest);
      const auto agg = sweep_seeds(manifest, cfg, seed_list, c.out);
      std::cout << format_aggregate(agg, manifest.name);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kOk;
}
