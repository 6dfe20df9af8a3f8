#include "tabncd/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "tabncd/checkpoint.hpp"
#include "tabncd/errors.hpp"
#include "tabncd/log.hpp"
#include "tabncd/metrics.hpp"

namespace tabncd {

namespace {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed",          "latent_dim",      "hidden_dim",      "head_hidden",         "pretrain",
      "ssl_epochs",    "ssl_p_m",         "ssl_alpha",       "ssl_lr",              "ssl_batch_size",
      "w1",            "w2",              "top_k",           "lr_classifier",       "lr_cluster",
      "batch_size",    "epochs",          "k_neighbors",     "baselines",           "baseline_epochs",
      "baseline_lr",   "baseline_batch_size", "kmeans_restarts", "kmeans_max_iter", "checkpoint_every",
      "eval_every_epoch", "export_embeddings", "debug_pseudo_labels", "comment"};
  return keys;
}

std::vector<std::string> class_names_unknown(const NcdSplit& split) { return split.partition.unknown; }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  read_key(j, "seed", c.seed);
  read_key(j, "latent_dim", c.latent_dim);
  read_key(j, "hidden_dim", c.hidden_dim);
  read_key(j, "head_hidden", c.head_hidden);
  read_key(j, "pretrain", c.pretrain);
  read_key(j, "ssl_epochs", c.ssl_epochs);
  read_key(j, "ssl_p_m", c.ssl_p_m);
  read_key(j, "ssl_alpha", c.ssl_alpha);
  read_key(j, "ssl_lr", c.ssl_lr);
  read_key(j, "ssl_batch_size", c.ssl_batch_size);
  read_key(j, "w1", c.w1);
  read_key(j, "w2", c.w2);
  read_key(j, "top_k", c.top_k);
  read_key(j, "lr_classifier", c.lr_classifier);
  read_key(j, "lr_cluster", c.lr_cluster);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "epochs", c.epochs);
  read_key(j, "k_neighbors", c.k_neighbors);
  read_key(j, "baselines", c.baselines);
  read_key(j, "baseline_epochs", c.baseline_epochs);
  read_key(j, "baseline_lr", c.baseline_lr);
  read_key(j, "baseline_batch_size", c.baseline_batch_size);
  read_key(j, "kmeans_restarts", c.kmeans_restarts);
  read_key(j, "kmeans_max_iter", c.kmeans_max_iter);
  read_key(j, "checkpoint_every", c.checkpoint_every);
  read_key(j, "eval_every_epoch", c.eval_every_epoch);
  read_key(j, "export_embeddings", c.export_embeddings);
  read_key(j, "debug_pseudo_labels", c.debug_pseudo_labels);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"seed", seed},
          {"latent_dim", latent_dim},
          {"hidden_dim", hidden_dim},
          {"head_hidden", head_hidden},
          {"pretrain", pretrain},
          {"ssl_epochs", ssl_epochs},
          {"ssl_p_m", ssl_p_m},
          {"ssl_alpha", ssl_alpha},
          {"ssl_lr", ssl_lr},
          {"ssl_batch_size", ssl_batch_size},
          {"w1", w1},
          {"w2", w2},
          {"top_k", top_k},
          {"lr_classifier", lr_classifier},
          {"lr_cluster", lr_cluster},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"k_neighbors", k_neighbors},
          {"baselines", baselines},
          {"baseline_epochs", baseline_epochs},
          {"baseline_lr", baseline_lr},
          {"baseline_batch_size", baseline_batch_size},
          {"kmeans_restarts", kmeans_restarts},
          {"kmeans_max_iter", kmeans_max_iter},
          {"checkpoint_every", checkpoint_every},
          {"eval_every_epoch", eval_every_epoch},
          {"export_embeddings", export_embeddings},
          {"debug_pseudo_labels", debug_pseudo_labels}};
}

SslConfig ExperimentConfig::ssl() const { return {ssl_epochs, ssl_p_m, ssl_alpha, ssl_lr, ssl_batch_size, seed}; }

JointConfig ExperimentConfig::joint() const {
  JointConfig j;
  j.w1 = w1;
  j.w2 = w2;
  j.top_k = top_k;
  j.lr_classifier = lr_classifier;
  j.lr_cluster = lr_cluster;
  j.batch_size = batch_size;
  j.epochs = epochs;
  j.augment.k_neighbors = k_neighbors;
  j.seed = seed;
  return j;
}

ProjectionConfig ExperimentConfig::projection() const {
  return {latent_dim, hidden_dim, baseline_epochs, baseline_batch_size, baseline_lr, kmeans_restarts, kmeans_max_iter};
}

void ExperimentConfig::validate() const {
  joint().validate();
  if (latent_dim < 0 || hidden_dim < 0) throw ConfigError("latent_dim/hidden_dim must be >= 0");
  for (const int h : head_hidden) {
    if (h <= 0) throw ConfigError("head_hidden widths must be positive");
  }
  if (!(ssl_p_m > 0.0 && ssl_p_m < 1.0)) throw ConfigError("ssl_p_m must lie in (0, 1)");
  if (ssl_alpha < 0.0 || ssl_epochs < 0 || ssl_batch_size < 1) throw ConfigError("bad SSL settings");
  if (baseline_epochs < 0 || baseline_batch_size < 1 || kmeans_restarts < 1 || kmeans_max_iter < 1) {
    throw ConfigError("bad baseline settings");
  }
  for (const auto& b : baselines) {
    if (b != "kmeans" && b != "baseline") throw ConfigError("unknown baseline '" + b + "'");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

// ---------------------------------------------------------------------------

PretrainOutcome pretrain_encoder(const NcdSplit& split, const ExperimentConfig& cfg) {
  const int d = split.schema.encoded_dim;
  Rng rng = Rng::derive(cfg.seed, 1);
  const auto specs = default_encoder_specs(d, cfg.latent_dim, cfg.hidden_dim);
  PretrainOutcome out{DenseNet::initialize(d, specs, rng), {}};
  if (!cfg.pretrain || cfg.ssl_epochs == 0) return out;

  const TrainingPool pool(split.labeled_train, split.unlabeled_train, split.partition.num_known());
  const Matrix X = pool.all_rows();
  SslHeads heads = SslHeads::initialize(out.encoder.output_dim(), d, rng);
  out.log = ssl_pretrain(out.encoder, heads, X, cfg.ssl());
  return out;
}

MetricsReport evaluate_model(const JointModel& model, const NcdSplit& split) {
  if (split.unlabeled_test.rows() == 0) throw DataError("no unlabeled test rows to evaluate");
  const auto pred = predict_clusters(model, split.unlabeled_test.X);
  return evaluate_clustering(split.hidden.test, pred);
}

TrainOutcome train_joint(const NcdSplit& split, DenseNet encoder, const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir) {
  Rng rng = Rng::derive(cfg.seed, 2);
  TrainOutcome out{JointModel::create(std::move(encoder), split.partition.num_known(),
                                      split.partition.num_unknown(), rng, cfg.head_hidden),
                   {},
                   {}};
  JointTrainer trainer(out.model, split.labeled_train, split.unlabeled_train, split.schema, cfg.joint());

  // Evaluation-only view of the hidden training labels.
  const std::size_t n_labeled = split.labeled_train.rows();
  const std::vector<int>& hidden = split.hidden.train;
  int current_epoch = 0;
  std::size_t batch_no = 0;
  trainer.set_probe([&](std::span<const std::size_t> pool_rows, const PseudoLabelSet& labels) -> std::optional<double> {
    std::vector<int> truth;
    truth.reserve(pool_rows.size());
    for (const auto p : pool_rows) truth.push_back(hidden.at(p - n_labeled));
    const double precision = pseudo_label_precision(labels, truth);
    if (cfg.debug_pseudo_labels) {
      out.batch_precision.push_back({{"epoch", current_epoch}, {"batch", batch_no++}, {"precision", precision}});
    }
    return precision;
  });

  const auto names = class_names_unknown(split);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    current_epoch = epoch;
    batch_no = 0;
    JointEpochLog entry = trainer.train_epoch();
    if (cfg.eval_every_epoch && split.unlabeled_test.rows() > 0) {
      entry.test_metrics = to_json(evaluate_model(out.model, split), names);
    }
    log_info("epoch " + std::to_string(epoch) + " L_class " + std::to_string(entry.classification_loss) +
             " L_clust " + std::to_string(entry.clustering_loss) + " precision " +
             std::to_string(entry.pseudo_label_precision));
    out.log.push_back(std::move(entry));
    if (checkpoint_dir && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      std::ostringstream name;
      name << "model_epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
      save_joint_model(out.model, *checkpoint_dir / name.str());
    }
  }
  return out;
}

nlohmann::json run_baselines(const NcdSplit& split, const ExperimentConfig& cfg) {
  nlohmann::json out = nlohmann::json::object();
  const auto names = class_names_unknown(split);
  const int cu = split.partition.num_unknown();
  for (const auto& which : cfg.baselines) {
    if (which == "kmeans") {
      const KMeansConfig km{cu, cfg.kmeans_max_iter, cfg.kmeans_restarts, cfg.seed};
      const auto result = kmeans(split.unlabeled_test.X, km);
      out["kmeans"] = to_json(evaluate_clustering(split.hidden.test, result.labels), names);
    } else if (which == "baseline") {
      const auto result = projection_baseline(split.labeled_train, split.unlabeled_test.X,
                                              split.partition.num_known(), cu, cfg.projection(), cfg.seed);
      out["baseline"] = to_json(evaluate_clustering(split.hidden.test, result.labels), names);
    }
  }
  return out;
}

void export_embeddings(const DenseNet& encoder, const NcdSplit& split, const std::filesystem::path& out_csv,
                       std::uint64_t seed) {
  if (encoder.input_dim() != split.schema.encoded_dim) {
    throw ConfigError("export_embeddings: encoder expects " + std::to_string(encoder.input_dim()) +
                      " features, dataset has " + std::to_string(split.schema.encoded_dim));
  }
  std::ofstream out(out_csv);
  if (!out) throw ConfigError("cannot write " + out_csv.string());
  out << "# dataset=" << split.name << " seed=" << seed << " split_seed=" << split.seed << '\n';
  out << "id,class,split,labeled";
  for (int c = 0; c < encoder.output_dim(); ++c) out << ",z" << c;
  out << '\n';
  out << std::setprecision(17);
  const int nk = split.partition.num_known();
  auto emit = [&](const Matrix& X, const std::vector<std::size_t>& ids, auto class_of, const char* role, bool labeled) {
    if (X.rows() == 0) return;
    const Matrix z = encoder.forward(X);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const auto i = static_cast<std::size_t>(r);
      out << ids[i] << ',' << split.partition.class_name(class_of(i)) << ',' << role << ',' << (labeled ? 1 : 0);
      for (Eigen::Index c = 0; c < z.cols(); ++c) out << ',' << z(r, c);
      out << '\n';
    }
  };
  emit(split.labeled_train.X, split.labeled_train.row_ids, [&](std::size_t i) { return split.labeled_train.y[i]; },
       "train", true);
  emit(split.unlabeled_train.X, split.unlabeled_train.row_ids,
       [&](std::size_t i) { return nk + split.hidden.train[i]; }, "train", false);
  emit(split.labeled_test.X, split.labeled_test.row_ids, [&](std::size_t i) { return split.labeled_test.y[i]; },
       "test", true);
  emit(split.unlabeled_test.X, split.unlabeled_test.row_ids,
       [&](std::size_t i) { return nk + split.hidden.test[i]; }, "test", false);
}

void save_joint_model(const JointModel& model, const std::filesystem::path& path) {
  save_checkpoint(path, {{"encoder", &model.encoder}, {"classifier", &model.classifier},
                         {"cluster_head", &model.cluster_head}});
}

JointModel load_joint_model(const std::filesystem::path& path) {
  auto nets = load_checkpoint(path);
  for (const char* key : {"encoder", "classifier", "cluster_head"}) {
    if (!nets.contains(key)) throw DataError("checkpoint " + path.string() + " lacks network '" + key + "'");
  }
  JointModel m{std::move(nets.at("encoder")), std::move(nets.at("classifier")), std::move(nets.at("cluster_head"))};
  m.validate();
  return m;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

nlohmann::json run_experiment(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "config.json", cfg.to_json());

  const NcdSplit split = prepare_split(manifest);
  auto summary = split_summary(split);
  summary["run_seed"] = cfg.seed;
  write_json(out_dir / "split_summary.json", summary);
  log_info("split: " + std::to_string(split.labeled_train.rows()) + " labeled / " +
           std::to_string(split.unlabeled_train.rows()) + " unlabeled training rows");

  auto pre = pretrain_encoder(split, cfg);
  if (cfg.export_embeddings) {
    // Same initialisation as pretrain_encoder before any SSL step.
    Rng rng = Rng::derive(cfg.seed, 1);
    const auto specs = default_encoder_specs(split.schema.encoded_dim, cfg.latent_dim, cfg.hidden_dim);
    export_embeddings(DenseNet::initialize(split.schema.encoded_dim, specs, rng), split,
                      out_dir / "embeddings_initial.csv", cfg.seed);
    export_embeddings(pre.encoder, split, out_dir / "embeddings_pretrained.csv", cfg.seed);
  }
  write_json(out_dir / "pretrain_log.json", {{"seed", cfg.seed}, {"dataset", split.name}, {"epochs", to_json(pre.log)}});
  save_checkpoint(out_dir / "encoder_pretrained.ckpt", {{"encoder", &pre.encoder}});

  auto trained = train_joint(split, pre.encoder, cfg, out_dir);
  nlohmann::json train_log = nlohmann::json::array();
  for (const auto& e : trained.log) train_log.push_back(to_json(e));
  write_json(out_dir / "train_log.json", {{"seed", cfg.seed}, {"dataset", split.name}, {"epochs", train_log}});
  if (cfg.debug_pseudo_labels) {
    write_json(out_dir / "pseudo_label_precision.json",
               {{"seed", cfg.seed}, {"dataset", split.name}, {"batches", trained.batch_precision}});
  }
  save_joint_model(trained.model, out_dir / "model.ckpt");
  if (cfg.export_embeddings) export_embeddings(trained.model.encoder, split, out_dir / "embeddings_final.csv", cfg.seed);

  nlohmann::json metrics;
  metrics["dataset"] = split.name;
  metrics["seed"] = cfg.seed;
  metrics["split_seed"] = split.seed;
  metrics["tabularncd"] = to_json(evaluate_model(trained.model, split), class_names_unknown(split));
  const auto baselines = run_baselines(split, cfg);
  for (const auto& [name, report] : baselines.items()) metrics[name] = report;
  write_json(out_dir / "metrics.json", metrics);
  return metrics;
}

nlohmann::json aggregate_runs(const std::vector<nlohmann::json>& runs) {
  nlohmann::json out = nlohmann::json::object();
  if (runs.empty()) return out;
  for (const char* method : {"tabularncd", "kmeans", "baseline"}) {
    std::vector<const nlohmann::json*> present;
    for (const auto& r : runs) {
      if (r.contains(method)) present.push_back(&r.at(method));
    }
    if (present.empty()) continue;
    for (const char* metric : {"acc", "bacc", "nmi", "ari"}) {
      double mean = 0.0;
      for (const auto* p : present) mean += p->at(metric).get<double>();
      mean /= static_cast<double>(present.size());
      double var = 0.0;
      for (const auto* p : present) var += std::pow(p->at(metric).get<double>() - mean, 2);
      const double sd = present.size() > 1 ? std::sqrt(var / static_cast<double>(present.size() - 1)) : 0.0;
      out[method][metric] = {{"mean", mean}, {"std", sd}};
    }
    out[method]["runs"] = present.size();
  }
  return out;
}

std::string format_aggregate(const nlohmann::json& aggregate, const std::string& dataset) {
  std::ostringstream s;
  s << std::fixed;
  s << "Dataset | Method | BACC (%) | ACC (%) | NMI | ARI\n";
  const std::pair<const char*, const char*> methods[] = {
      {"baseline", "Baseline"}, {"kmeans", "k-means"}, {"tabularncd", "TabularNCD"}};
  for (const auto& [key, label] : methods) {
    if (!aggregate.contains(key)) continue;
    const auto& m = aggregate.at(key);
    auto pct = [&](const char* metric) {
      std::ostringstream c;
      c << std::fixed << std::setprecision(1) << 100.0 * m.at(metric).at("mean").get<double>() << "±"
        << 100.0 * m.at(metric).at("std").get<double>();
      return c.str();
    };
    auto raw = [&](const char* metric) {
      std::ostringstream c;
      c << std::fixed << std::setprecision(2) << m.at(metric).at("mean").get<double>() << "±"
        << m.at(metric).at("std").get<double>();
      return c.str();
    };
    s << dataset << " | " << label << " | " << pct("bacc") << " | " << pct("acc") << " | " << raw("nmi") << " | "
      << raw("ari") << '\n';
  }
  return s.str();
}

nlohmann::json sweep_seeds(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                           const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<nlohmann::json> runs;
  for (const auto seed : seeds) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.seed = seed;
    log_info("seed " + std::to_string(seed));
    runs.push_back(run_experiment(manifest, run_cfg, out_dir / ("seed_" + std::to_string(seed))));
  }
  nlohmann::json agg = aggregate_runs(runs);
  agg["dataset"] = manifest.name;
  agg["seeds"] = seeds;
  write_json(out_dir / "aggregate.json", agg);
  std::ofstream(out_dir / "aggregate.txt") << format_aggregate(agg, manifest.name);
  return agg;
}

}  // namespace tabncd
