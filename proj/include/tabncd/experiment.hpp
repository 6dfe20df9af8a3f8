#pragma once

// End-to-end experiment driver: split -> SSL pretraining -> joint training ->
// evaluation on the unlabeled test split, plus baselines and embedding export.
// Every artifact is written under the output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabncd/baselines.hpp"
#include "tabncd/data.hpp"
#include "tabncd/joint.hpp"
#include "tabncd/metrics.hpp"
#include "tabncd/vime.hpp"

namespace tabncd {

/// Flat JSON run configuration. Missing keys take the defaults below; unknown
/// keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  // Architecture.
  int latent_dim = 0;  // 0: min(d, 64)
  int hidden_dim = 0;  // 0: 2 * latent
  std::vector<int> head_hidden;

  // Self-supervised pretraining.
  bool pretrain = true;
  int ssl_epochs = 30;
  double ssl_p_m = 0.3;
  double ssl_alpha = 2.0;
  double ssl_lr = 1e-3;
  int ssl_batch_size = 128;

  // Joint training.
  double w1 = 0.8;
  double w2 = 0.9;
  int top_k = 5;
  double lr_classifier = 1e-3;
  double lr_cluster = 1e-3;
  int batch_size = 512;
  int epochs = 30;
  int k_neighbors = 5;

  // Baselines.
  std::vector<std::string> baselines{"kmeans", "baseline"};
  int baseline_epochs = 30;
  double baseline_lr = 1e-3;
  int baseline_batch_size = 512;
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;

  // Outputs.
  int checkpoint_every = 10;  // 0: final checkpoint only
  bool eval_every_epoch = true;
  bool export_embeddings = true;
  bool debug_pseudo_labels = false;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  [[nodiscard]] nlohmann::json to_json() const;

  [[nodiscard]] SslConfig ssl() const;
  [[nodiscard]] JointConfig joint() const;
  [[nodiscard]] ProjectionConfig projection() const;
  void validate() const;
};

/// Encoder initialised from the run seed, optionally SSL-pretrained on all
/// training rows (labeled and unlabeled, no labels read).
struct PretrainOutcome {
  DenseNet encoder;
  std::vector<SslEpochLog> log;
};
PretrainOutcome pretrain_encoder(const NcdSplit& split, const ExperimentConfig& cfg);

struct TrainOutcome {
  JointModel model;
  std::vector<JointEpochLog> log;
  std::vector<nlohmann::json> batch_precision;  // filled when debug_pseudo_labels
};

/// Joint training for cfg.epochs. Per-epoch checkpoints are written to
/// `checkpoint_dir` when given. Test metrics are attached to each epoch log when
/// cfg.eval_every_epoch is set.
TrainOutcome train_joint(const NcdSplit& split, DenseNet encoder, const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Metrics of the clustering head on the unlabeled test split.
MetricsReport evaluate_model(const JointModel& model, const NcdSplit& split);

/// k-means and/or projection baseline on the unlabeled test split, keyed by name.
nlohmann::json run_baselines(const NcdSplit& split, const ExperimentConfig& cfg);

/// CSV: comment line with seed, header `id,class,split,labeled,z0..`, one row per
/// sample of every split part, class as the ground-truth class name.
void export_embeddings(const DenseNet& encoder, const NcdSplit& split, const std::filesystem::path& out_csv,
                       std::uint64_t seed);

void save_joint_model(const JointModel& model, const std::filesystem::path& path);
JointModel load_joint_model(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Full pipeline. Writes config.json, split_summary.json, pretrain_log.json,
/// encoder_pretrained.ckpt, train_log.json, model.ckpt (+ per-epoch checkpoints),
/// metrics.json and embeddings_{initial,pretrained,final}.csv into out_dir.
/// Returns the metrics document.
nlohmann::json run_experiment(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                              const std::filesystem::path& out_dir);

/// Mean and sample standard deviation per method and metric over run documents
/// produced by run_experiment.
nlohmann::json aggregate_runs(const std::vector<nlohmann::json>& runs);
/// Table rows "Dataset | Method | BACC (%) | ACC (%) | NMI | ARI" as mean±std.
std::string format_aggregate(const nlohmann::json& aggregate, const std::string& dataset);

/// Runs `seeds` sequentially into out_dir/seed_<s>/ and writes aggregate.json and aggregate.txt.
nlohmann::json sweep_seeds(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                           const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir);

}  // namespace tabncd
