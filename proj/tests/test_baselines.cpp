#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "support.hpp"
#include "tabncd/baselines.hpp"
#include "tabncd/errors.hpp"
#include "tabncd/metrics.hpp"

using namespace tabncd;

namespace {

Matrix gaussian_blobs(const std::vector<std::vector<double>>& centres, int per, double sd, std::uint64_t seed,
                      std::vector<int>* y) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, sd);
  const auto d = static_cast<Eigen::Index>(centres[0].size());
  Matrix X(static_cast<Eigen::Index>(centres.size()) * per, d);
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (int i = 0; i < per; ++i, ++r) {
      for (Eigen::Index j = 0; j < d; ++j) X(r, j) = centres[c][static_cast<std::size_t>(j)] + n(g);
      if (y) y->push_back(static_cast<int>(c));
    }
  }
  return X;
}

// Plain Lloyd iterations written without matrix algebra.
std::vector<int> naive_lloyd(const Matrix& X, Matrix C, int iters) {
  std::vector<int> lab(static_cast<std::size_t>(X.rows()), 0);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < C.rows(); ++c) {
        double s = 0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) s += (X(i, j) - C(c, j)) * (X(i, j) - C(c, j));
        if (s < best) {
          best = s;
          lab[static_cast<std::size_t>(i)] = static_cast<int>(c);
        }
      }
    }
    Matrix sum = Matrix::Zero(C.rows(), C.cols());
    std::vector<int> cnt(static_cast<std::size_t>(C.rows()), 0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      sum.row(lab[static_cast<std::size_t>(i)]) += X.row(i);
      ++cnt[static_cast<std::size_t>(lab[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index c = 0; c < C.rows(); ++c) {
      if (cnt[static_cast<std::size_t>(c)] > 0) C.row(c) = sum.row(c) / cnt[static_cast<std::size_t>(c)];
    }
  }
  return lab;
}

}  // namespace

TEST(KMeans, SeparableBlobs) {
  std::vector<int> y;
  const Matrix X = gaussian_blobs({{0, 0}, {10, 10}}, 100, 1.0, 1, &y);
  const auto r = kmeans(X, KMeansConfig{2, 300, 10, 3});
  EXPECT_DOUBLE_EQ(clustering_accuracy(y, r.labels), 1.0);
}

TEST(KMeans, DegenerateK) {
  const Matrix X = Matrix::Random(25, 3);
  const auto one = kmeans(X, KMeansConfig{1, 300, 3, 0});
  for (int l : one.labels) EXPECT_EQ(l, 0);
  EXPECT_TRUE(one.centroids.row(0).isApprox(X.colwise().mean(), 1e-12));

  const auto all = kmeans(X, KMeansConfig{25, 300, 3, 0});
  EXPECT_NEAR(all.inertia, 0.0, 1e-20);
  EXPECT_EQ(std::set<int>(all.labels.begin(), all.labels.end()).size(), 25u);

  EXPECT_THROW(kmeans(X, KMeansConfig{26, 300, 3, 0}), ConfigError);
  EXPECT_THROW(kmeans(X, KMeansConfig{0, 300, 3, 0}), ConfigError);
}

TEST(KMeans, InertiaNonIncreasing) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix X = gaussian_blobs({{0, 0, 0}, {2, 0, 1}, {1, 2, 0}, {0, 1, 2}}, 40, 1.0, s, nullptr);
    const auto r = kmeans(X, KMeansConfig{4, 300, 3, s});
    ASSERT_FALSE(r.inertia_history.empty());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
    }
    EXPECT_NEAR(r.inertia, r.inertia_history.back(), 1e-9 * r.inertia);
  }
}

TEST(KMeans, LloydMatchesNaiveIterations) {
  std::mt19937_64 g(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix X = gaussian_blobs({{0, 0}, {3, 1}, {1, 4}}, 30, 1.2, static_cast<std::uint64_t>(t), nullptr);
    Rng rng(static_cast<std::uint64_t>(t));
    const Matrix C = kmeans_plus_plus(X, 3, rng);
    const auto r = lloyd(X, C, 300);
    EXPECT_EQ(r.labels, naive_lloyd(X, C, r.iterations));
  }
}

TEST(KMeans, PlusPlusBitwiseReproducible) {
  const Matrix X = Matrix::Random(200, 5);
  Rng a(17), b(17);
  const Matrix ca = kmeans_plus_plus(X, 6, a);
  const Matrix cb = kmeans_plus_plus(X, 6, b);
  EXPECT_EQ(std::memcmp(ca.data(), cb.data(), sizeof(double) * static_cast<std::size_t>(ca.size())), 0);
  // Centroids are data points.
  for (Eigen::Index c = 0; c < ca.rows(); ++c) {
    bool found = false;
    for (Eigen::Index i = 0; i < X.rows() && !found; ++i) found = X.row(i) == ca.row(c);
    EXPECT_TRUE(found);
  }
  const auto r1 = kmeans(X, KMeansConfig{6, 300, 5, 9});
  const auto r2 = kmeans(X, KMeansConfig{6, 300, 5, 9});
  EXPECT_EQ(r1.labels, r2.labels);
  EXPECT_EQ(r1.restart, r2.restart);
}

TEST(KMeans, EmptyClusterIsReseeded) {
  std::vector<int> y;
  const Matrix X = gaussian_blobs({{0, 0}, {5, 5}}, 30, 0.3, 2, &y);
  Matrix C(3, 2);
  C << 0, 0, 5, 5, 1000, 1000;  // third centroid attracts nothing
  const auto r = lloyd(X, C, 100);
  EXPECT_EQ(std::set<int>(r.labels.begin(), r.labels.end()).size(), 3u);
  EXPECT_LT(r.centroids(2, 0), 100.0);
  EXPECT_TRUE(std::isfinite(r.inertia));
}

TEST(Projection, DeterministicGivenSeed) {
  std::vector<int> y;
  LabeledSet l;
  l.X = gaussian_blobs({{0.2, 0.2, 0.5}, {0.8, 0.2, 0.5}}, 60, 0.05, 3, &y);
  l.y = y;
  const Matrix U = gaussian_blobs({{0.2, 0.8, 0.5}, {0.8, 0.8, 0.5}}, 40, 0.05, 4, nullptr);
  ProjectionConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  const auto a = projection_baseline(l, U, 2, 2, cfg, 7);
  const auto b = projection_baseline(l, U, 2, 2, cfg, 7);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(a.encoder == b.encoder);
  EXPECT_EQ(a.embeddings.rows(), U.rows());
  EXPECT_THROW(projection_baseline(LabeledSet{}, U, 2, 2, cfg, 7), DataError);
  EXPECT_THROW(projection_baseline(l, Matrix::Zero(3, 5), 2, 2, cfg, 7), ConfigError);
}

TEST(Projection, SharedDiscriminativeFeaturesBeatRawKMeans) {
  // Dimension 0 separates every class. Dimensions 1..6 are wide uniform noise
  // that dominates raw Euclidean distances; a classifier trained on the known
  // classes learns to rely on dimension 0 and the embedding inherits that.
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.02);
  auto make = [&](const std::vector<double>& levels, int per, std::vector<int>& y) {
    Matrix X(static_cast<Eigen::Index>(levels.size()) * per, 7);
    Eigen::Index r = 0;
    for (std::size_t c = 0; c < levels.size(); ++c) {
      for (int i = 0; i < per; ++i, ++r) {
        X(r, 0) = levels[c] + jitter(g);
        for (int j = 1; j < 7; ++j) X(r, j) = noise(g);
        y.push_back(static_cast<int>(c));
      }
    }
    return X;
  };
  LabeledSet l;
  l.X = make({0.1, 0.4, 0.7}, 150, l.y);
  std::vector<int> yu;
  const Matrix U = make({0.25, 0.55}, 150, yu);

  ProjectionConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  const auto proj = projection_baseline(l, U, 3, 2, cfg, 1);
  const auto raw = kmeans(U, KMeansConfig{2, 300, 10, 1});
  const double acc_proj = clustering_accuracy(yu, proj.labels);
  const double acc_raw = clustering_accuracy(yu, raw.labels);
  EXPECT_GT(acc_proj, acc_raw);
  EXPECT_GE(acc_proj, 0.9);
}

TEST(Projection, IrrelevantFeaturesAreLost) {
  // Known classes differ only on dimension 0; the unknown classes share
  // dimension 0 and differ only on dimension 1, which the known classes never
  // vary. Training on the known classes has no reason to keep dimension 1.
  double mean_proj = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> jitter(0.0, 0.03);
    LabeledSet l;
    l.X.resize(400, 2);
    for (Eigen::Index r = 0; r < 400; ++r) {
      const int c = static_cast<int>(r % 2);
      l.X(r, 0) = (c == 0 ? 0.1 : 0.9) + jitter(g);
      l.X(r, 1) = 0.5 + jitter(g);
      l.y.push_back(c);
    }
    std::vector<int> yu;
    Matrix U(300, 2);
    for (Eigen::Index r = 0; r < 300; ++r) {
      const int c = static_cast<int>(r % 2);
      U(r, 0) = 0.5 + jitter(g);
      U(r, 1) = (c == 0 ? 0.45 : 0.55) + jitter(g);
      yu.push_back(c);
    }
    ProjectionConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 64;
    const auto proj = projection_baseline(l, U, 2, 2, cfg, seed);
    const auto raw = kmeans(U, KMeansConfig{2, 300, 10, seed});
    const double acc_proj = clustering_accuracy(yu, proj.labels);
    const double acc_raw = clustering_accuracy(yu, raw.labels);
    EXPECT_GE(acc_raw, 0.9) << "seed " << seed;
    EXPECT_LT(acc_proj, acc_raw - 0.15) << "seed " << seed;
    mean_proj += acc_proj / 5.0;
  }
  // Chance for two balanced classes is 0.5.
  EXPECT_LT(mean_proj, 0.75);
}
