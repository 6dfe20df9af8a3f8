#include "tabncd/vime.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tabncd/data.hpp"
#include "tabncd/errors.hpp"
#include "tabncd/log.hpp"

namespace tabncd {

CorruptionBatch corrupt(const Matrix& x_batch, const Matrix& train_X, double p_m, Rng& rng) {
  if (!(p_m > 0.0 && p_m < 1.0)) throw ConfigError("corrupt: p_m must lie in (0, 1)");
  if (train_X.rows() == 0) throw DataError("corrupt: empty training matrix");
  if (train_X.cols() != x_batch.cols()) throw ConfigError("corrupt: column mismatch");
  CorruptionBatch out{x_batch, Matrix::Zero(x_batch.rows(), x_batch.cols()), x_batch, p_m};
  const auto n_train = static_cast<std::size_t>(train_X.rows());
  for (Eigen::Index i = 0; i < x_batch.rows(); ++i) {
    for (Eigen::Index j = 0; j < x_batch.cols(); ++j) {
      if (!rng.bernoulli(p_m)) continue;
      out.mask(i, j) = 1.0;
      out.x_tilde(i, j) = train_X(static_cast<Eigen::Index>(rng.uniform_index(n_train)), j);
    }
  }
  return out;
}

std::vector<LayerSpec> default_encoder_specs(int input_dim, int latent_dim, int hidden_dim) {
  if (input_dim <= 0) throw ConfigError("encoder: input_dim must be positive");
  const int latent = latent_dim > 0 ? latent_dim : std::min(input_dim, 64);
  const int hidden = hidden_dim > 0 ? hidden_dim : 2 * latent;
  return {{hidden, Activation::relu}, {latent, Activation::identity}};
}

SslHeads SslHeads::initialize(int latent_dim, int input_dim, Rng& rng) {
  const LayerSpec mask[] = {{input_dim, Activation::sigmoid}};
  const LayerSpec recon[] = {{input_dim, Activation::identity}};
  return {DenseNet::initialize(latent_dim, mask, rng), DenseNet::initialize(latent_dim, recon, rng)};
}

std::vector<SslEpochLog> ssl_pretrain(DenseNet& encoder, SslHeads& heads, const Matrix& train_X,
                                      const SslConfig& cfg) {
  const int d = static_cast<int>(train_X.cols());
  if (encoder.input_dim() != d) throw ConfigError("ssl_pretrain: encoder input dim != data dim");
  if (heads.mask_estimator.input_dim() != encoder.output_dim() ||
      heads.reconstructor.input_dim() != encoder.output_dim() || heads.mask_estimator.output_dim() != d ||
      heads.reconstructor.output_dim() != d) {
    throw ConfigError("ssl_pretrain: SSL heads do not match encoder/data dims");
  }
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw ConfigError("ssl_pretrain: bad epochs/batch_size");
  if (cfg.alpha < 0.0) throw ConfigError("ssl_pretrain: alpha must be >= 0");

  const AdamConfig adam{cfg.learning_rate};
  Adam enc_opt(encoder, adam);
  Adam mask_opt(heads.mask_estimator, adam);
  Adam recon_opt(heads.reconstructor, adam);
  Rng rng = Rng::derive(cfg.seed, 0x551);
  BatchSampler sampler(static_cast<std::size_t>(train_X.rows()), static_cast<std::size_t>(cfg.batch_size),
                       cfg.seed ^ 0x551);

  std::vector<SslEpochLog> log;
  ForwardTrace enc_trace, mask_trace, recon_trace;
  GradientTape enc_tape(encoder), mask_tape(heads.mask_estimator), recon_tape(heads.reconstructor);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    SslEpochLog entry{epoch};
    double rows_seen = 0.0;
    for (const auto& idx : sampler.next_epoch()) {
      const std::vector<Eigen::Index> rows(idx.begin(), idx.end());
      const Matrix x = train_X(rows, Eigen::all);
      const CorruptionBatch cb = corrupt(x, train_X, cfg.p_m, rng);

      const Matrix z = encoder.forward(cb.x_tilde, enc_trace);
      if (!z.allFinite()) {
        throw TrainingDiverged("SSL pretraining: encoder output became non-finite at epoch " + std::to_string(epoch));
      }
      heads.mask_estimator.forward(z, mask_trace);
      heads.reconstructor.forward(z, recon_trace);
      const LossValue mask_loss = bce_grad(mask_trace.output(), cb.mask);
      LossValue recon_loss = mse_grad(recon_trace.output(), cb.x);
      recon_loss.grad *= cfg.alpha;
      const double loss = mask_loss.value + cfg.alpha * recon_loss.value;
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "SSL pretraining diverged at epoch " << epoch << " (mask loss " << mask_loss.value
            << ", reconstruction loss " << recon_loss.value << ")";
        throw TrainingDiverged(msg.str());
      }

      enc_tape.clear();
      mask_tape.clear();
      recon_tape.clear();
      Matrix dz = heads.mask_estimator.backward(mask_trace, mask_loss.grad, mask_tape);
      dz += heads.reconstructor.backward(recon_trace, recon_loss.grad, recon_tape);
      encoder.backward(enc_trace, dz, enc_tape);
      enc_tape.loss = mask_tape.loss = recon_tape.loss = loss;
      enc_opt.step(encoder, enc_tape);
      mask_opt.step(heads.mask_estimator, mask_tape);
      recon_opt.step(heads.reconstructor, recon_tape);

      const double w = static_cast<double>(rows.size());
      entry.loss += w * loss;
      entry.mask_loss += w * mask_loss.value;
      entry.reconstruction_loss += w * recon_loss.value;
      rows_seen += w;
    }
    entry.loss /= rows_seen;
    entry.mask_loss /= rows_seen;
    entry.reconstruction_loss /= rows_seen;
    log_debug("ssl epoch " + std::to_string(epoch) + " loss " + std::to_string(entry.loss));
    log.push_back(entry);
  }
  return log;
}

nlohmann::json to_json(const std::vector<SslEpochLog>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : log) {
    arr.push_back({{"epoch", e.epoch},
                   {"loss", e.loss},
                   {"mask_loss", e.mask_loss},
                   {"reconstruction_loss", e.reconstruction_loss}});
  }
  return arr;
}

}  // namespace tabncd
