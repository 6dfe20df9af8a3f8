#pragma once

#include <cstdint>
#include <vector>

#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"

namespace tabncd {

struct KMeansConfig {
  int k = 2;
  int max_iter = 300;
  int restarts = 10;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;  // k x d
  double inertia = 0.0;
  int iterations = 0;
  int restart = 0;                     // index of the winning restart
  std::vector<double> inertia_history;  // per Lloyd iteration of the winning restart
};

/// Lloyd's algorithm with k-means++ seeding. Keeps the restart with the lowest
/// inertia (ties: lowest restart index). An empty cluster is re-seeded at the
/// point farthest from its assigned centroid.
KMeansResult kmeans(const Matrix& X, const KMeansConfig& cfg);

/// Single run from explicit initial centroids; exposed for tests.
KMeansResult lloyd(const Matrix& X, Matrix centroids, int max_iter);

/// k-means++ initial centroids.
Matrix kmeans_plus_plus(const Matrix& X, int k, Rng& rng);

struct ProjectionConfig {
  int latent_dim = 0;  // 0: min(d, 64)
  int hidden_dim = 0;  // 0: 2 * latent
  int epochs = 30;
  int batch_size = 512;
  double learning_rate = 1e-3;
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
};

struct ProjectionResult {
  std::vector<int> labels;
  Matrix embeddings;  // penultimate-layer features of the clustered rows
  DenseNet encoder;
  DenseNet classifier;
};

/// Trains encoder + softmax over the known classes on labeled rows only, then
/// runs k-means (k = num_unknown) on the encoder output of `X_cluster`.
ProjectionResult projection_baseline(const LabeledSet& labeled_train, const Matrix& X_cluster, int num_known,
                                     int num_unknown, const ProjectionConfig& cfg, std::uint64_t seed);

}  // namespace tabncd
