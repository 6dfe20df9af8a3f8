#include "tabncd/joint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tabncd/errors.hpp"
#include "tabncd/log.hpp"

namespace tabncd {

JointModel JointModel::create(DenseNet encoder, int num_known, int num_unknown, Rng& rng,
                              std::span<const int> head_hidden) {
  if (num_known < 1 || num_unknown < 1) throw ConfigError("JointModel: need C^l >= 1 and C^u >= 1");
  auto head = [&](int outputs) {
    std::vector<LayerSpec> specs;
    for (const int h : head_hidden) specs.push_back({h, Activation::relu});
    specs.push_back({outputs, Activation::softmax});
    return DenseNet::initialize(encoder.output_dim(), specs, rng);
  };
  JointModel m;
  m.classifier = head(num_known + 1);
  m.cluster_head = head(num_unknown);
  m.encoder = std::move(encoder);
  m.validate();
  return m;
}

void JointModel::validate() const {
  if (classifier.input_dim() != encoder.output_dim() || cluster_head.input_dim() != encoder.output_dim()) {
    throw ConfigError("JointModel: heads must consume the encoder latent dimension");
  }
  if (classifier.layers().back().activation != Activation::softmax ||
      cluster_head.layers().back().activation != Activation::softmax) {
    throw ConfigError("JointModel: heads must end in softmax");
  }
  if (classifier.output_dim() < 2) throw ConfigError("JointModel: classifier needs C^l + 1 >= 2 outputs");
}

void JointConfig::validate() const {
  if (!(w1 >= 0.0 && w1 <= 1.0) || !(w2 >= 0.0 && w2 <= 1.0)) throw ConfigError("w1 and w2 must lie in [0, 1]");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr_classifier >= 0.0) || !(lr_cluster >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (augment.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
}

// ---------------------------------------------------------------------------

double pair_score(std::span<const double> q_i, std::span<const double> q_j) {
  if (q_i.size() != q_j.size()) throw ConfigError("pair_score: length mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < q_i.size(); ++c) s += q_i[c] * q_j[c];
  return s;
}

namespace {

// Inputs are validated at load time, so a non-finite latent here means the
// weights have blown up.
void require_finite_latent(const Matrix& z, int epoch) {
  if (!z.allFinite()) {
    throw TrainingDiverged("encoder output became non-finite at epoch " + std::to_string(epoch));
  }
}

void check_pairs(const Matrix& probs, const PseudoLabelSet& labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.batch()) {
    throw ConfigError("clustering_loss: pseudo-label batch does not match probabilities");
  }
  if (probs.rows() < 2) throw ConfigError("clustering_loss: need at least 2 rows");
}

}  // namespace

double clustering_loss(const Matrix& probs, const PseudoLabelSet& labels) {
  check_pairs(probs, labels);
  const auto b = static_cast<std::size_t>(probs.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double anchor = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      const double p = std::clamp(probs.row(static_cast<Eigen::Index>(i)).dot(probs.row(static_cast<Eigen::Index>(j))),
                                  kLogClamp, 1.0 - kLogClamp);
      anchor += labels.at(i, j) ? -std::log(p) : -std::log(1.0 - p);
    }
    total += anchor / static_cast<double>(b - 1);
  }
  return total / static_cast<double>(b);
}

LossValue clustering_loss_grad(const Matrix& probs, const PseudoLabelSet& labels) {
  check_pairs(probs, labels);
  const Eigen::Index b = probs.rows();
  const Matrix scores = probs * probs.transpose();
  Matrix dscore = Matrix::Zero(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double anchor = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (i == j) continue;
      const double raw = scores(i, j);
      const double p = std::clamp(raw, kLogClamp, 1.0 - kLogClamp);
      if (labels.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
        anchor -= std::log(p);
        dscore(i, j) = -1.0 / std::max(raw, kLogClamp);
      } else {
        anchor -= std::log(1.0 - p);
        dscore(i, j) = 1.0 / std::max(1.0 - raw, kLogClamp);
      }
    }
    total += anchor / static_cast<double>(b - 1);
  }
  const double norm = static_cast<double>(b) * static_cast<double>(b - 1);
  LossValue out;
  out.value = total / static_cast<double>(b);
  out.grad = ((dscore + dscore.transpose()) * probs) / norm;
  return out;
}

double regularization_loss(const DenseNet& head, const Matrix& z, const Matrix& z_bar) {
  return loss_mse(head.forward(z), head.forward(z_bar));
}

nlohmann::json to_json(const JointEpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"classification_loss", e.classification_loss},
                   {"clustering_loss", e.clustering_loss},
                   {"l_class", e.l_class},
                   {"l_reg_classifier", e.l_reg_classifier},
                   {"l_clust", e.l_clust},
                   {"l_reg_cluster", e.l_reg_cluster},
                   {"batches", e.batches},
                   {"skipped_cluster_steps", e.skipped_cluster_steps},
                   {"shrunk_top_k", e.shrunk_top_k},
                   {"zero_norm_pairs", e.zero_norm_pairs}};
  j["pseudo_label_precision"] =
      std::isnan(e.pseudo_label_precision) ? nlohmann::json(nullptr) : nlohmann::json(e.pseudo_label_precision);
  if (e.test_metrics) j["test_metrics"] = *e.test_metrics;
  return j;
}

// ---------------------------------------------------------------------------

JointTrainer::JointTrainer(JointModel& model, const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                           const ColumnSchema& schema, const JointConfig& cfg)
    : model_(model),
      cfg_(cfg),
      pool_(labeled, unlabeled, model.num_known()),
      perturber_(labeled, unlabeled, schema, cfg.augment),
      sampler_(pool_.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed ^ 0x10147),
      rng_(Rng::derive(cfg.seed, 0x10147)),
      cls_encoder_opt_(model.encoder, {cfg.lr_classifier}),
      cls_head_opt_(model.classifier, {cfg.lr_classifier}),
      clu_encoder_opt_(model.encoder, {cfg.lr_cluster}),
      clu_head_opt_(model.cluster_head, {cfg.lr_cluster}) {
  cfg_.validate();
  model_.validate();
  if (pool_.dim() != model_.encoder.input_dim()) throw ConfigError("JointTrainer: encoder input dim != data dim");
  for (const int y : labeled.y) {
    if (y < 0 || y >= model_.num_known()) throw ConfigError("JointTrainer: labeled class id out of range");
  }
}

JointEpochLog JointTrainer::train_epoch() {
  ++epoch_;
  JointEpochLog log;
  log.epoch = epoch_;

  const Matrix perturbed = perturber_.perturb_all(rng_);
  const int classes = model_.num_known() + 1;
  const double w1 = cfg_.w1;
  const double w2 = cfg_.w2;

  ForwardTrace z_trace, zb_trace, p_trace, pb_trace;
  GradientTape enc_tape(model_.encoder);
  GradientTape cls_tape(model_.classifier);
  GradientTape clu_tape(model_.cluster_head);

  double cls_rows = 0.0;
  double clu_rows = 0.0;
  double precision_sum = 0.0;
  double precision_rows = 0.0;

  for (const auto& indices : sampler_.next_epoch()) {
    const Batch batch = pool_.make_batch(indices);
    const std::vector<Eigen::Index> rows(indices.begin(), indices.end());
    const Matrix x_bar = perturbed(rows, Eigen::all);
    ++log.batches;

    // (A) encoder + classifier on the full batch.
    {
      enc_tape.clear();
      cls_tape.clear();
      const Matrix z = model_.encoder.forward(batch.X, z_trace);
      const Matrix z_bar = model_.encoder.forward(x_bar, zb_trace);
      require_finite_latent(z, epoch_);
      require_finite_latent(z_bar, epoch_);
      model_.classifier.forward(z, p_trace);
      model_.classifier.forward(z_bar, pb_trace);
      const LossValue ce = cross_entropy_grad(p_trace.output(), one_hot(batch.targets, classes));
      const LossValue reg = mse_grad(p_trace.output(), pb_trace.output());
      const double loss = w1 * ce.value + (1.0 - w1) * reg.value;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "classification loss diverged at epoch " << epoch_ << " (l_class " << ce.value << ", l_reg "
            << reg.value << ")";
        throw TrainingDiverged(msg.str());
      }
      const Matrix g_p = w1 * ce.grad + (1.0 - w1) * reg.grad;
      const Matrix g_pb = -(1.0 - w1) * reg.grad;
      const Matrix dz = model_.classifier.backward(p_trace, g_p, cls_tape);
      const Matrix dzb = model_.classifier.backward(pb_trace, g_pb, cls_tape);
      model_.encoder.backward(z_trace, dz, enc_tape);
      model_.encoder.backward(zb_trace, dzb, enc_tape);
      enc_tape.loss = cls_tape.loss = loss;
      cls_encoder_opt_.step(model_.encoder, enc_tape);
      cls_head_opt_.step(model_.classifier, cls_tape);

      const double n = static_cast<double>(indices.size());
      log.classification_loss += n * loss;
      log.l_class += n * ce.value;
      log.l_reg_classifier += n * reg.value;
      cls_rows += n;
    }

    // (B) encoder + clustering head on the batch's unlabeled rows.
    const std::size_t nu = batch.unlabeled_positions.size();
    if (nu < 2) {
      ++log.skipped_cluster_steps;
      continue;
    }
    {
      std::vector<Eigen::Index> upos(batch.unlabeled_positions.begin(), batch.unlabeled_positions.end());
      const Matrix xu = batch.X(upos, Eigen::all);
      const Matrix xu_bar = x_bar(upos, Eigen::all);

      int k = cfg_.top_k;
      if (static_cast<std::size_t>(k) >= nu) {
        k = static_cast<int>(nu) - 1;
        ++log.shrunk_top_k;
      }

      enc_tape.clear();
      clu_tape.clear();
      const Matrix zu = model_.encoder.forward(xu, z_trace);
      const Matrix zu_bar = model_.encoder.forward(xu_bar, zb_trace);
      require_finite_latent(zu, epoch_);
      require_finite_latent(zu_bar, epoch_);
      const PseudoLabelSet labels = assign_pseudo_labels(zu, k, &log.zero_norm_pairs);
      if (probe_) {
        std::vector<std::size_t> pool_rows;
        pool_rows.reserve(nu);
        for (const auto pos : batch.unlabeled_positions) pool_rows.push_back(indices[pos]);
        if (const auto precision = probe_(pool_rows, labels)) {
          precision_sum += static_cast<double>(nu) * *precision;
          precision_rows += static_cast<double>(nu);
        }
      }

      model_.cluster_head.forward(zu, p_trace);
      model_.cluster_head.forward(zu_bar, pb_trace);
      const LossValue clust = clustering_loss_grad(p_trace.output(), labels);
      const LossValue reg = mse_grad(p_trace.output(), pb_trace.output());
      const double loss = w2 * clust.value + (1.0 - w2) * reg.value;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "clustering loss diverged at epoch " << epoch_ << " (l_clust " << clust.value << ", l_reg "
            << reg.value << ")";
        throw TrainingDiverged(msg.str());
      }
      const Matrix g_q = w2 * clust.grad + (1.0 - w2) * reg.grad;
      const Matrix g_qb = -(1.0 - w2) * reg.grad;
      const Matrix dz = model_.cluster_head.backward(p_trace, g_q, clu_tape);
      const Matrix dzb = model_.cluster_head.backward(pb_trace, g_qb, clu_tape);
      model_.encoder.backward(z_trace, dz, enc_tape);
      model_.encoder.backward(zb_trace, dzb, enc_tape);
      enc_tape.loss = clu_tape.loss = loss;
      clu_encoder_opt_.step(model_.encoder, enc_tape);
      clu_head_opt_.step(model_.cluster_head, clu_tape);

      const double n = static_cast<double>(nu);
      log.clustering_loss += n * loss;
      log.l_clust += n * clust.value;
      log.l_reg_cluster += n * reg.value;
      clu_rows += n;
    }
  }

  if (cls_rows > 0) {
    log.classification_loss /= cls_rows;
    log.l_class /= cls_rows;
    log.l_reg_classifier /= cls_rows;
  }
  if (clu_rows > 0) {
    log.clustering_loss /= clu_rows;
    log.l_clust /= clu_rows;
    log.l_reg_cluster /= clu_rows;
  }
  if (precision_rows > 0) log.pseudo_label_precision = precision_sum / precision_rows;
  if (log.skipped_cluster_steps > 0) {
    log_info("epoch " + std::to_string(epoch_) + ": skipped " + std::to_string(log.skipped_cluster_steps) +
             " clustering steps (fewer than 2 unlabeled rows in batch)");
  }
  return log;
}

std::vector<int> predict_clusters(const JointModel& model, const Matrix& X) {
  return argmax_rows(model.cluster_head.forward(model.encoder.forward(X)));
}

}  // namespace tabncd
