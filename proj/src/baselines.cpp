#include "tabncd/baselines.hpp"

#include <limits>

#include "tabncd/errors.hpp"
#include "tabncd/vime.hpp"

namespace tabncd {

namespace {

/// Squared distances n x k.
Matrix squared_distances(const Matrix& X, const Matrix& C) {
  Matrix d = (-2.0 * X * C.transpose());
  d.colwise() += X.rowwise().squaredNorm();
  d.rowwise() += C.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

Matrix kmeans_plus_plus(const Matrix& X, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(X.rows());
  Matrix centroids(k, X.cols());
  centroids.row(0) = X.row(static_cast<Eigen::Index>(rng.uniform_index(n)));
  Vector closest = (X.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      pick = X.rows() - 1;
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        target -= closest(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(n));
    }
    centroids.row(c) = X.row(pick);
    closest = closest.cwiseMin((X.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

KMeansResult lloyd(const Matrix& X, Matrix centroids, int max_iter) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = centroids.rows();
  KMeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int it = 0; it < max_iter; ++it) {
    const Matrix d = squared_distances(X, centroids);
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      d.row(i).minCoeff(&best);
      dist(i) = d(i, best);
      if (r.labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        r.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    r.inertia_history.push_back(dist.sum());
    r.iterations = it + 1;
    if (!changed && it > 0) break;

    Matrix sums = Matrix::Zero(k, X.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[static_cast<std::size_t>(i)]) += X.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seed at the point farthest from its centroid; zero its distance so
        // a second empty cluster picks a different point.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centroids.row(c) = X.row(far);
        dist(far) = 0.0;
      }
    }
  }
  const Matrix d = squared_distances(X, centroids);
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) r.inertia += d(i, r.labels[static_cast<std::size_t>(i)]);
  r.centroids = std::move(centroids);
  return r;
}

KMeansResult kmeans(const Matrix& X, const KMeansConfig& cfg) {
  if (cfg.k < 1 || X.rows() < cfg.k) throw ConfigError("kmeans: need n >= k >= 1");
  if (cfg.max_iter < 1 || cfg.restarts < 1) throw ConfigError("kmeans: max_iter and restarts must be >= 1");
  if (!X.allFinite()) throw DataError("kmeans: non-finite input");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng = Rng::derive(cfg.seed, 0x4b00 + static_cast<std::uint64_t>(restart));
    KMeansResult r = lloyd(X, kmeans_plus_plus(X, cfg.k, rng), cfg.max_iter);
    r.restart = restart;
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

ProjectionResult projection_baseline(const LabeledSet& labeled_train, const Matrix& X_cluster, int num_known,
                                     int num_unknown, const ProjectionConfig& cfg, std::uint64_t seed) {
  if (labeled_train.rows() == 0) throw DataError("projection baseline: no labeled training rows");
  if (num_known < 1 || num_unknown < 1) throw ConfigError("projection baseline: bad class counts");
  const int d = static_cast<int>(labeled_train.X.cols());
  if (X_cluster.cols() != d) throw ConfigError("projection baseline: feature width mismatch");

  Rng rng = Rng::derive(seed, 0xba5e);
  ProjectionResult out;
  const auto enc_specs = default_encoder_specs(d, cfg.latent_dim, cfg.hidden_dim);
  out.encoder = DenseNet::initialize(d, enc_specs, rng);
  const LayerSpec head[] = {{num_known, Activation::softmax}};
  out.classifier = DenseNet::initialize(out.encoder.output_dim(), head, rng);

  Adam enc_opt(out.encoder, {cfg.learning_rate});
  Adam cls_opt(out.classifier, {cfg.learning_rate});
  BatchSampler sampler(labeled_train.rows(), static_cast<std::size_t>(cfg.batch_size), seed ^ 0xba5e);
  ForwardTrace enc_trace, cls_trace;
  GradientTape enc_tape(out.encoder), cls_tape(out.classifier);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : sampler.next_epoch()) {
      const std::vector<Eigen::Index> rows(idx.begin(), idx.end());
      std::vector<int> y;
      for (const auto i : idx) y.push_back(labeled_train.y[i]);
      const Matrix z = out.encoder.forward(labeled_train.X(rows, Eigen::all), enc_trace);
      out.classifier.forward(z, cls_trace);
      const LossValue ce = cross_entropy_grad(cls_trace.output(), one_hot(y, num_known));
      enc_tape.clear();
      cls_tape.clear();
      const Matrix dz = out.classifier.backward(cls_trace, ce.grad, cls_tape);
      out.encoder.backward(enc_trace, dz, enc_tape);
      enc_tape.loss = cls_tape.loss = ce.value;
      enc_opt.step(out.encoder, enc_tape);
      cls_opt.step(out.classifier, cls_tape);
    }
  }

  out.embeddings = out.encoder.forward(X_cluster);
  const KMeansConfig km{num_unknown, cfg.kmeans_max_iter, cfg.kmeans_restarts, seed};
  out.labels = kmeans(out.embeddings, km).labels;
  return out;
}

}  // namespace tabncd
