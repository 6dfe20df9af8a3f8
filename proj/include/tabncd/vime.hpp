#pragma once

// Self-supervised encoder pretraining by mask estimation and value imputation.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabncd/nn.hpp"
#include "tabncd/rng.hpp"

namespace tabncd {

struct CorruptionBatch {
  Matrix x;
  Matrix mask;  // 1 where the cell was replaced
  Matrix x_tilde;
  double p_m = 0.0;
};

/// Each cell is replaced, with probability p_m, by the same column's value
/// from a uniformly drawn row of `train_X`.
CorruptionBatch corrupt(const Matrix& x_batch, const Matrix& train_X, double p_m, Rng& rng);

/// Encoder layout: d -> 2*latent (relu) -> latent (identity); latent defaults to min(d, 64).
std::vector<LayerSpec> default_encoder_specs(int input_dim, int latent_dim = 0, int hidden_dim = 0);

struct SslHeads {
  DenseNet mask_estimator;  // latent -> d, sigmoid
  DenseNet reconstructor;   // latent -> d, identity

  static SslHeads initialize(int latent_dim, int input_dim, Rng& rng);
};

struct SslConfig {
  int epochs = 30;
  double p_m = 0.3;
  double alpha = 2.0;
  double learning_rate = 1e-3;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

struct SslEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double mask_loss = 0.0;
  double reconstruction_loss = 0.0;
};

/// Objective per batch: BCE(mask_estimator(z), m) + alpha * MSE(reconstructor(z), x)
/// with z = encoder(x_tilde). Updates encoder and both heads; reads no labels.
std::vector<SslEpochLog> ssl_pretrain(DenseNet& encoder, SslHeads& heads, const Matrix& train_X,
                                      const SslConfig& cfg);

nlohmann::json to_json(const std::vector<SslEpochLog>& log);

}  // namespace tabncd
