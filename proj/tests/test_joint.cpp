#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tabncd/errors.hpp"
#include "tabncd/joint.hpp"
#include "tabncd/metrics.hpp"
#include "tabncd/vime.hpp"

using namespace tabncd;

namespace {

// Pairwise BCE written from the formula: per anchor, mean over the other rows.
double oracle_clustering_loss(const Matrix& Q, const Matrix& Y) {
  const Eigen::Index b = Q.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      double p = 0.0;
      for (Eigen::Index c = 0; c < Q.cols(); ++c) p += Q(i, c) * Q(j, c);
      p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
      s += -Y(i, j) * std::log(p) - (1.0 - Y(i, j)) * std::log(1.0 - p);
    }
    total += s / static_cast<double>(b - 1);
  }
  return total / static_cast<double>(b);
}

Matrix random_simplex_rows(std::mt19937_64& g, Eigen::Index b, Eigen::Index c) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix Q(b, c);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) Q(i, j) = u(g);
    Q.row(i) /= Q.row(i).sum();
  }
  return Q;
}

PseudoLabelSet random_labels(std::mt19937_64& g, std::size_t b, int k) {
  PseudoLabelSet p(b, k);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) others.push_back(j);
    }
    std::shuffle(others.begin(), others.end(), g);
    for (int t = 0; t < k; ++t) p.set(i, others[static_cast<std::size_t>(t)]);
  }
  return p;
}

// One known blob and two unknown blobs in [0,1]^d, as ready-made training sets.
struct Toy {
  LabeledSet labeled;
  UnlabeledSet unlabeled;
  std::vector<int> hidden;
  ColumnSchema schema;
};

Toy toy_blobs(int per_class, int dims, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 0.04);
  Toy t;
  t.schema = ColumnSchema::all_continuous(dims);
  t.labeled.X.resize(per_class, dims);
  t.unlabeled.X.resize(2 * per_class, dims);
  for (int i = 0; i < per_class; ++i) {
    for (int j = 0; j < dims; ++j) t.labeled.X(i, j) = (j == 0 ? 0.8 : 0.2) + n(g);
    t.labeled.y.push_back(0);
    t.labeled.row_ids.push_back(static_cast<std::size_t>(i));
  }
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int j = 0; j < dims; ++j) t.unlabeled.X(r, j) = (j == c + 1 ? 0.8 : 0.2) + n(g);
      t.unlabeled.row_ids.push_back(static_cast<std::size_t>(per_class + r));
      t.hidden.push_back(c);
    }
  }
  return t;
}

JointModel fresh_model(int dims, std::uint64_t seed) {
  Rng rng(seed);
  const auto specs = default_encoder_specs(dims);
  return JointModel::create(DenseNet::initialize(dims, specs, rng), 1, 2, rng);
}

}  // namespace

TEST(PairScore, ExamplesAndSymmetry) {
  const double a[] = {1, 0}, b[] = {0, 1}, h[] = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(pair_score(a, a), 1.0);
  EXPECT_DOUBLE_EQ(pair_score(a, b), 0.0);
  EXPECT_DOUBLE_EQ(pair_score(h, h), 0.5);
  std::mt19937_64 g(1);
  for (int t = 0; t < 100; ++t) {
    const Matrix Q = random_simplex_rows(g, 2, 5);
    const Vector q0 = Q.row(0).transpose(), q1 = Q.row(1).transpose();
    const double s01 = pair_score(std::span<const double>(q0.data(), 5), std::span<const double>(q1.data(), 5));
    const double s10 = pair_score(std::span<const double>(q1.data(), 5), std::span<const double>(q0.data(), 5));
    EXPECT_EQ(s01, s10);
    EXPECT_GE(s01, 0.0);
    EXPECT_LE(s01, 1.0);
  }
}

TEST(ClusteringLoss, Examples) {
  Matrix same(4, 2);
  same << 1, 0, 1, 0, 1, 0, 1, 0;
  EXPECT_LT(clustering_loss(same, assign_pseudo_labels(Matrix::Ones(4, 2), 3)), 1e-11);

  Matrix two(4, 2);
  two << 1, 0, 1, 0, 0, 1, 0, 1;
  PseudoLabelSet blocks(4, 1);
  blocks.set(0, 1);
  blocks.set(1, 0);
  blocks.set(2, 3);
  blocks.set(3, 2);
  EXPECT_LT(clustering_loss(two, blocks), 1e-11);

  Matrix apart(2, 2);
  apart << 1, 0, 0, 1;
  PseudoLabelSet pos(2, 1);
  pos.set(0, 1);
  pos.set(1, 0);
  EXPECT_NEAR(clustering_loss(apart, pos), -std::log(1e-12), 1e-9);
  EXPECT_NEAR(clustering_loss(apart, pos), 27.631, 1e-3);
}

TEST(ClusteringLoss, MatchesOracleAndFiniteDifferences) {
  std::mt19937_64 g(7);
  for (int t = 0; t < 20; ++t) {
    const auto b = static_cast<Eigen::Index>(3 + t % 9);
    const Matrix Q = random_simplex_rows(g, b, 2 + t % 4);
    const auto labels = random_labels(g, static_cast<std::size_t>(b), 1 + t % static_cast<int>(b - 1));
    const LossValue lv = clustering_loss_grad(Q, labels);
    EXPECT_NEAR(lv.value, oracle_clustering_loss(Q, labels.as_matrix()), 1e-12);
    EXPECT_NEAR(clustering_loss(Q, labels), lv.value, 1e-12);

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < Q.size(); ++i) {
      Matrix up = Q, down = Q;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fd = (oracle_clustering_loss(up, labels.as_matrix()) - oracle_clustering_loss(down, labels.as_matrix())) / (2 * h);
      EXPECT_LT(oracle::rel_error(fd, lv.grad.data()[i]), 1e-5);
    }
  }
}

TEST(ClusteringLoss, GradientThroughSoftmaxHead) {
  std::mt19937_64 g(9);
  Rng rng(3);
  const LayerSpec spec[] = {{6, Activation::relu}, {3, Activation::softmax}};
  DenseNet head = DenseNet::initialize(4, spec, rng);
  const Matrix z = Matrix::Random(10, 4);
  const auto labels = random_labels(g, 10, 3);

  ForwardTrace trace;
  head.forward(z, trace);
  GradientTape tape(head);
  head.backward(trace, clustering_loss_grad(trace.output(), labels).grad, tape);

  auto& params = head.parameters();
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (Eigen::Index i = 0; i < params[l].weight.size(); ++i) {
      double& w = params[l].weight.data()[i];
      const double keep = w;
      w = keep + h;
      const double up = oracle_clustering_loss(head.forward(z), labels.as_matrix());
      w = keep - h;
      const double down = oracle_clustering_loss(head.forward(z), labels.as_matrix());
      w = keep;
      worst = std::max(worst, oracle::rel_error((up - down) / (2 * h), tape.layers[l].weight.data()[i]));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(RegularizationLoss, ExamplesAndBound) {
  Rng rng(1);
  const LayerSpec spec[] = {{3, Activation::softmax}};
  const DenseNet head = DenseNet::initialize(4, spec, rng);
  const Matrix z = Matrix::Random(8, 4);
  EXPECT_EQ(regularization_loss(head, z, z), 0.0);

  // Identity softmax head driven into saturation: outputs (1,0) and (0,1).
  const LayerSpec two[] = {{2, Activation::softmax}};
  DenseNet sat = DenseNet::initialize(2, two, rng);
  sat.parameters()[0].weight.setIdentity();
  sat.parameters()[0].bias.setZero();
  Matrix a(1, 2), b(1, 2);
  a << 60, 0;
  b << 0, 60;
  EXPECT_NEAR(regularization_loss(sat, a, b), 1.0, 1e-12);

  for (int t = 0; t < 50; ++t) {
    const Matrix z1 = 20.0 * Matrix::Random(6, 4);
    const Matrix z2 = 20.0 * Matrix::Random(6, 4);
    const double r = regularization_loss(head, z1, z2);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(JointModel, ShapesAndValidation) {
  Rng rng(1);
  const auto specs = default_encoder_specs(5, 3);
  const int hidden[] = {8};
  auto m = JointModel::create(DenseNet::initialize(5, specs, rng), 4, 2, rng, hidden);
  EXPECT_EQ(m.classifier.output_dim(), 5);
  EXPECT_EQ(m.cluster_head.output_dim(), 2);
  EXPECT_EQ(m.num_known(), 4);
  EXPECT_EQ(m.num_unknown(), 2);
  EXPECT_EQ(m.cluster_head.depth(), 2u);

  const Matrix out = m.cluster_head.forward(m.encoder.forward(Matrix::Random(30, 5)));
  for (Eigen::Index i = 0; i < out.rows(); ++i) EXPECT_NEAR(out.row(i).sum(), 1.0, 1e-6);

  const LayerSpec wrong[] = {{2, Activation::softmax}};
  m.cluster_head = DenseNet::initialize(7, wrong, rng);
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(JointTrainer, RegularisationWeightZeroIgnoresPerturbations) {
  // With w1 = w2 = 1 the perturbed rows carry no gradient, so the neighbour
  // count used to build them cannot matter.
  const auto t = toy_blobs(40, 6, 1);
  auto run = [&](int k_neighbors) {
    JointModel m = fresh_model(6, 2);
    JointConfig cfg;
    cfg.w1 = cfg.w2 = 1.0;
    cfg.batch_size = 32;
    cfg.augment.k_neighbors = k_neighbors;
    JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
    tr.train_epoch();
    tr.train_epoch();
    return m;
  };
  const JointModel a = run(2), b = run(6);
  EXPECT_TRUE(a.encoder == b.encoder);
  EXPECT_TRUE(a.classifier == b.classifier);
  EXPECT_TRUE(a.cluster_head == b.cluster_head);
}

TEST(JointTrainer, ZeroLearningRateIsNoOp) {
  const auto t = toy_blobs(30, 5, 2);
  JointModel m = fresh_model(5, 3);
  const JointModel before = m;
  JointConfig cfg;
  cfg.lr_classifier = cfg.lr_cluster = 0.0;
  cfg.w1 = cfg.w2 = 1.0;
  cfg.batch_size = 16;
  JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
  const auto e1 = tr.train_epoch();
  const auto e2 = tr.train_epoch();
  EXPECT_TRUE(m.encoder == before.encoder);
  EXPECT_TRUE(m.classifier == before.classifier);
  EXPECT_TRUE(m.cluster_head == before.cluster_head);
  // Row-weighted epoch means of a per-row loss do not depend on batching.
  EXPECT_NEAR(e1.l_class, e2.l_class, 1e-12);
}

TEST(JointTrainer, HeadsOnlyMoveWithTheirOwnLoss) {
  const auto t = toy_blobs(30, 5, 3);
  {
    JointModel m = fresh_model(5, 4);
    const JointModel before = m;
    JointConfig cfg;
    cfg.lr_cluster = 0.0;
    cfg.batch_size = 16;
    JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
    tr.train_epoch();
    EXPECT_TRUE(m.cluster_head == before.cluster_head);
    EXPECT_FALSE(m.classifier == before.classifier);
  }
  {
    JointModel m = fresh_model(5, 4);
    const JointModel before = m;
    JointConfig cfg;
    cfg.lr_classifier = 0.0;
    cfg.batch_size = 16;
    JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
    tr.train_epoch();
    EXPECT_TRUE(m.classifier == before.classifier);
    EXPECT_FALSE(m.cluster_head == before.cluster_head);
  }
}

TEST(JointTrainer, SkipsAndShrinks) {
  auto t = toy_blobs(10, 4, 4);
  // Two unlabeled rows only: most batches have fewer than two.
  t.unlabeled.X.conservativeResize(2, Eigen::NoChange);
  t.unlabeled.row_ids.resize(2);
  JointModel m = fresh_model(4, 5);
  JointConfig cfg;
  cfg.batch_size = 3;
  cfg.top_k = 5;
  cfg.augment.k_neighbors = 1;
  JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
  const auto e = tr.train_epoch();
  EXPECT_EQ(e.batches, 4u);
  EXPECT_GE(e.skipped_cluster_steps, 3u);
  EXPECT_EQ(e.skipped_cluster_steps + e.shrunk_top_k, e.batches);
}

TEST(JointTrainer, LossDecreasesWithAccuratePseudoLabels) {
  const auto t = toy_blobs(120, 6, 5);
  JointModel m = fresh_model(6, 6);
  JointConfig cfg;
  cfg.w1 = cfg.w2 = 1.0;
  cfg.batch_size = 64;
  cfg.top_k = 8;
  cfg.lr_cluster = 1e-2;
  JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
  tr.set_probe([&](std::span<const std::size_t> rows, const PseudoLabelSet& labels) -> std::optional<double> {
    std::vector<int> truth;
    for (const auto r : rows) truth.push_back(t.hidden[r - t.labeled.rows()]);
    return pseudo_label_precision(labels, truth);
  });
  std::vector<double> total;
  for (int e = 0; e < 6; ++e) {
    const auto log = tr.train_epoch();
    EXPECT_GT(log.pseudo_label_precision, 0.99);
    total.push_back(log.classification_loss + log.clustering_loss);
  }
  int rises = 0;
  for (std::size_t i = 1; i < total.size(); ++i) rises += total[i] >= total[i - 1];
  EXPECT_LE(rises, 1);
}

TEST(JointTrainer, RecoversUnknownBlobs) {
  const auto t = toy_blobs(150, 8, 6);
  Rng rng(7);
  const auto specs = default_encoder_specs(8);
  DenseNet enc = DenseNet::initialize(8, specs, rng);
  Matrix all(t.labeled.rows() + t.unlabeled.rows(), 8);
  all << t.labeled.X, t.unlabeled.X;
  auto heads = SslHeads::initialize(enc.output_dim(), 8, rng);
  ssl_pretrain(enc, heads, all, SslConfig{});

  JointModel m = JointModel::create(enc, 1, 2, rng);
  JointConfig cfg;
  cfg.batch_size = 128;
  cfg.top_k = 30;
  cfg.lr_cluster = 1e-2;
  JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
  for (int e = 0; e < 30; ++e) tr.train_epoch();

  const auto pred = predict_clusters(m, t.unlabeled.X);
  EXPECT_GE(clustering_accuracy(t.hidden, pred), 0.95);
  EXPECT_EQ(pred, predict_clusters(m, t.unlabeled.X));
  for (int p : pred) {
    EXPECT_GE(p, 0);
    EXPECT_LT(p, 2);
  }
}

TEST(JointTrainer, Deterministic) {
  const auto t = toy_blobs(30, 4, 8);
  auto run = [&]() {
    JointModel m = fresh_model(4, 9);
    JointConfig cfg;
    cfg.batch_size = 20;
    cfg.seed = 3;
    JointTrainer tr(m, t.labeled, t.unlabeled, t.schema, cfg);
    tr.train_epoch();
    tr.train_epoch();
    return m;
  };
  const auto a = run(), b = run();
  EXPECT_TRUE(a.encoder == b.encoder);
  EXPECT_TRUE(a.cluster_head == b.cluster_head);
}

TEST(JointConfig, Validation) {
  JointConfig c;
  c.w1 = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = JointConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = JointConfig{};
  c.top_k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
