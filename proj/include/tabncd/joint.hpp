#pragma once

// Joint training of the classification network (known classes plus one
// aggregate "unlabeled" class) and the clustering network (unknown classes)
// on a shared encoder. Each mini-batch runs two updates with two independent
// optimizers: first encoder+classifier, then encoder+clustering head.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabncd/augment.hpp"
#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"
#include "tabncd/pseudo_label.hpp"

namespace tabncd {

struct JointModel {
  DenseNet encoder;
  DenseNet classifier;    // latent -> C^l + 1, softmax
  DenseNet cluster_head;  // latent -> C^u, softmax

  /// Fresh heads on top of `encoder`. `head_hidden` adds relu layers before the softmax.
  static JointModel create(DenseNet encoder, int num_known, int num_unknown, Rng& rng,
                           std::span<const int> head_hidden = {});

  [[nodiscard]] int num_known() const { return classifier.output_dim() - 1; }
  [[nodiscard]] int num_unknown() const { return cluster_head.output_dim(); }
  /// Throws ConfigError if the heads do not consume the encoder's latent width.
  void validate() const;
};

struct JointConfig {
  double w1 = 0.8;
  double w2 = 0.9;
  int top_k = 5;
  double lr_classifier = 1e-3;
  double lr_cluster = 1e-3;
  int batch_size = 512;
  int epochs = 30;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

/// p_ij: dot product of two clustering-head outputs.
double pair_score(std::span<const double> q_i, std::span<const double> q_j);

/// Pairwise BCE between p_ij = q_i . q_j and the pseudo-labels, normalised by
/// (b-1) per anchor and averaged over anchors; p clamped to [1e-12, 1-1e-12].
double clustering_loss(const Matrix& probs, const PseudoLabelSet& labels);
LossValue clustering_loss_grad(const Matrix& probs, const PseudoLabelSet& labels);

/// MSE between a head's outputs on z and on z_bar, averaged over outputs and rows.
double regularization_loss(const DenseNet& head, const Matrix& z, const Matrix& z_bar);

struct JointEpochLog {
  int epoch = 0;
  double classification_loss = 0.0;  // w1 * l_class + (1 - w1) * l_reg
  double clustering_loss = 0.0;      // w2 * l_clust + (1 - w2) * l_reg
  double l_class = 0.0;
  double l_reg_classifier = 0.0;
  double l_clust = 0.0;
  double l_reg_cluster = 0.0;
  double pseudo_label_precision = std::numeric_limits<double>::quiet_NaN();
  std::size_t batches = 0;
  std::size_t skipped_cluster_steps = 0;
  std::size_t shrunk_top_k = 0;  // batches where top_k was reduced to (unlabeled - 1)
  std::size_t zero_norm_pairs = 0;
  std::optional<nlohmann::json> test_metrics;
};

nlohmann::json to_json(const JointEpochLog& e);

/// Receives, for every clustering step, the pool row indices of the batch's
/// unlabeled rows and the pseudo-labels assigned to them. Returns the
/// pseudo-label precision, or nullopt. Evaluation only: the trainer never
/// sees ground truth.
using PseudoLabelProbe = std::function<std::optional<double>(std::span<const std::size_t>, const PseudoLabelSet&)>;

class JointTrainer {
 public:
  JointTrainer(JointModel& model, const LabeledSet& labeled, const UnlabeledSet& unlabeled,
               const ColumnSchema& schema, const JointConfig& cfg);

  void set_probe(PseudoLabelProbe probe) { probe_ = std::move(probe); }

  /// One pass over the training pool. Perturbed copies are redrawn at the start of each epoch.
  JointEpochLog train_epoch();

  [[nodiscard]] const TrainingPool& pool() const { return pool_; }
  [[nodiscard]] int epochs_done() const { return epoch_; }

 private:
  JointModel& model_;
  JointConfig cfg_;
  TrainingPool pool_;
  SmotePerturber perturber_;
  BatchSampler sampler_;
  Rng rng_;
  Adam cls_encoder_opt_;
  Adam cls_head_opt_;
  Adam clu_encoder_opt_;
  Adam clu_head_opt_;
  PseudoLabelProbe probe_;
  int epoch_ = 0;
};

/// argmax of cluster_head(encoder(X)).
std::vector<int> predict_clusters(const JointModel& model, const Matrix& X);

}  // namespace tabncd
