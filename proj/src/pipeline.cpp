#include "cohortmt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "cohortmt/autoencoder.hpp"
#include "cohortmt/common.hpp"
#include "cohortmt/dataset.hpp"
#include "cohortmt/episode.hpp"
#include "cohortmt/evalstats.hpp"
#include "cohortmt/gmm.hpp"
#include "cohortmt/predictor.hpp"
#include "cohortmt/report.hpp"
#include "cohortmt/synth.hpp"

namespace cohortmt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << content;
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v(i) = a[i];
  return v;
}

std::string fmt_prob(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

}  // namespace

// ---------------------------------------------------------------------------
// config

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  ExperimentConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("stage_dir", c.stage_dir);
    get("episodes_path", c.episodes_path);
    get("measurements_path", c.measurements_path);
    get("truth_path", c.truth_path);
    get("window_hours", c.window_hours);
    get("gap_hours", c.gap_hours);
    if (j.contains("buckets")) {
      c.buckets.zmin = j["buckets"].value("zmin", c.buckets.zmin);
      c.buckets.zmax = j["buckets"].value("zmax", c.buckets.zmax);
    }
    get("test_frac", c.test_frac);
    get("val_denominator", c.val_denominator);
    get("min_positives", c.min_positives);
    get("ethnicity_top_k", c.ethnicity_top_k);
    get("sample_std", c.sample_std);
    get("synth_n", c.synth_n);
    get("synth_separation", c.synth_separation);
    get("embedding_sizes", c.embedding_sizes);
    get("ae_learning_rate", c.ae_learning_rate);
    get("ae_max_epochs", c.ae_max_epochs);
    get("ae_patience", c.ae_patience);
    get("ae_batch_size", c.ae_batch_size);
    get("k_candidates", c.k_candidates);
    get("gmm_restarts", c.gmm_restarts);
    get("select_epochs", c.select_epochs);
    get("variant", c.variant);
    get("trunk_grid", c.trunk_grid);
    get("global_dense_grid", c.global_dense_grid);
    get("mt_head_grid", c.mt_head_grid);
    get("pred_learning_rate", c.pred_learning_rate);
    get("pred_max_epochs", c.pred_max_epochs);
    get("pred_patience", c.pred_patience);
    get("pred_batch_size", c.pred_batch_size);
    get("grid_splits", c.grid_splits);
    get("sensitivity_target", c.sensitivity_target);
    get("n_bootstrap", c.n_bootstrap);
    get("threshold_mode", c.threshold_mode);
    get("plot_features", c.plot_features);
    get("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError("bad config field in " + path + ": " + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (stage_dir.empty()) throw ConfigError("stage_dir must be set");
  const bool supported = (window_hours == 24 && gap_hours == 12) ||
                         (window_hours == 48 && gap_hours == 24);
  if (!supported) throw ConfigError("window/gap must be 24/12 or 48/24");
  if (embedding_sizes.empty()) throw ConfigError("no embedding size candidates");
  if (k_candidates.empty()) throw ConfigError("no cluster count candidates");
  for (int k : k_candidates)
    if (k < 1) throw ConfigError("cluster counts must be >= 1");
  if (trunk_grid.empty() || global_dense_grid.empty() || mt_head_grid.empty())
    throw ConfigError("hyperparameter grids must be non-empty");
  // capacity fairness: multitask heads never exceed the global dense size
  int max_head = *std::max_element(mt_head_grid.begin(), mt_head_grid.end());
  int max_dense =
      *std::max_element(global_dense_grid.begin(), global_dense_grid.end());
  if (max_head > max_dense)
    throw ConfigError("multitask head sizes must not exceed the global dense size");
  variant_from_name(variant);
  if (threshold_mode != "test" && threshold_mode != "validation")
    throw ConfigError("threshold_mode must be 'test' or 'validation'");
  if (n_bootstrap < 1) throw ConfigError("n_bootstrap must be >= 1");
  if (!(sensitivity_target > 0.0 && sensitivity_target <= 1.0))
    throw ConfigError("sensitivity_target must be in (0, 1]");
  for (const auto& f : plot_features)
    if (!feature_index(f)) throw ConfigError("unknown plot feature: " + f);
}

std::string ExperimentConfig::to_json_string() const {
  json j = {
      {"stage_dir", stage_dir},
      {"episodes_path", episodes_path},
      {"measurements_path", measurements_path},
      {"truth_path", truth_path},
      {"window_hours", window_hours},
      {"gap_hours", gap_hours},
      {"buckets", {{"zmin", buckets.zmin}, {"zmax", buckets.zmax}}},
      {"test_frac", test_frac},
      {"val_denominator", val_denominator},
      {"min_positives", min_positives},
      {"ethnicity_top_k", ethnicity_top_k},
      {"sample_std", sample_std},
      {"synth_n", synth_n},
      {"synth_separation", synth_separation},
      {"embedding_sizes", embedding_sizes},
      {"ae_learning_rate", ae_learning_rate},
      {"ae_max_epochs", ae_max_epochs},
      {"ae_patience", ae_patience},
      {"ae_batch_size", ae_batch_size},
      {"k_candidates", k_candidates},
      {"gmm_restarts", gmm_restarts},
      {"select_epochs", select_epochs},
      {"variant", variant},
      {"trunk_grid", trunk_grid},
      {"global_dense_grid", global_dense_grid},
      {"mt_head_grid", mt_head_grid},
      {"pred_learning_rate", pred_learning_rate},
      {"pred_max_epochs", pred_max_epochs},
      {"pred_patience", pred_patience},
      {"pred_batch_size", pred_batch_size},
      {"grid_splits", grid_splits},
      {"sensitivity_target", sensitivity_target},
      {"n_bootstrap", n_bootstrap},
      {"threshold_mode", threshold_mode},
      {"plot_features", plot_features},
      {"seed", seed},
  };
  return j.dump(2) + "\n";
}

std::string ExperimentConfig::digest() const {
  // the digest excludes stage_dir so a run can be relocated
  ExperimentConfig c = *this;
  c.stage_dir = "";
  return to_hex(fnv1a(c.to_json_string()));
}

// ---------------------------------------------------------------------------
// manifest

Pipeline::Pipeline(ExperimentConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  fs::create_directories(cfg_.stage_dir);
  std::string mpath = stage_path("manifest.json");
  if (fs::exists(mpath)) {
    json m = json::parse(read_file(mpath));
    if (m.value("config_digest", "") != cfg_.digest())
      throw ConfigError(
          "stage directory holds artifacts from a different config; "
          "refusing to mix (use a fresh --stage-dir)");
  } else {
    json m = {{"config_digest", cfg_.digest()}, {"stages", json::object()}};
    write_atomic(mpath, m.dump(2) + "\n");
  }
}

std::string Pipeline::stage_path(const std::string& name) const {
  return cfg_.stage_dir + "/" + name;
}

bool Pipeline::stage_done(const std::string& stage) const {
  json m = json::parse(read_file(stage_path("manifest.json")));
  return m["stages"].contains(stage) &&
         m["stages"][stage].value("completed", false);
}

void Pipeline::require(const std::string& stage) const {
  if (!stage_done(stage)) throw MissingUpstream(stage);
}

void Pipeline::mark_done(const std::string& stage,
                         const std::vector<std::string>& artifacts,
                         double seconds) {
  json m = json::parse(read_file(stage_path("manifest.json")));
  m["stages"][stage] = {{"completed", true},
                        {"artifacts", artifacts},
                        {"seed", cfg_.seed},
                        {"seconds", seconds}};
  write_atomic(stage_path("manifest.json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// stages

void Pipeline::run_synth(bool force) {
  if (stage_done("synth") && !force) {
    std::cout << "synth: up to date\n";
    return;
  }
  Timer timer;
  auto spec = default_population_spec(cfg_.synth_n, cfg_.synth_separation,
                                      mix_seed(cfg_.seed, 11));
  auto set = generate_population(spec);
  save_episodes(set.episodes, stage_path("raw_episodes.csv"),
                stage_path("raw_measurements.csv"));
  save_truth_sidecar(set.truth, stage_path("truth.csv"));
  mark_done("synth", {"raw_episodes.csv", "raw_measurements.csv", "truth.csv"},
            timer.seconds());
  std::cout << "synth: " << set.episodes.size() << " episodes\n";
}

void Pipeline::run_ingest(bool force) {
  if (stage_done("ingest") && !force) {
    std::cout << "ingest: up to date\n";
    return;
  }
  std::string eps = cfg_.episodes_path.empty() ? stage_path("raw_episodes.csv")
                                               : cfg_.episodes_path;
  std::string meas = cfg_.measurements_path.empty()
                         ? stage_path("raw_measurements.csv")
                         : cfg_.measurements_path;
  if (cfg_.episodes_path.empty() && !fs::exists(eps))
    throw MissingUpstream("synth");
  Timer timer;
  auto loaded = load_episodes(eps, meas);
  for (const auto& r : loaded.rejects)
    std::cerr << "reject " << r.where << ": " << r.message << "\n";
  auto included = apply_inclusion(std::move(loaded.episodes));

  DatasetConfig dc;
  dc.window_hours = cfg_.window_hours;
  dc.gap_hours = cfg_.gap_hours;
  dc.test_frac = cfg_.test_frac;
  dc.val_denominator = cfg_.val_denominator;
  dc.min_positives = cfg_.min_positives;
  dc.ethnicity_top_k = cfg_.ethnicity_top_k;
  dc.sample_std = cfg_.sample_std;
  dc.buckets = cfg_.buckets;
  dc.seed = cfg_.seed;
  auto ds = build_task_dataset(included.episodes, dc);
  save_dataset(ds, stage_path("dataset"));
  mark_done("ingest", {"dataset"}, timer.seconds());
  std::cout << "ingest: " << ds.size() << " episodes, dim "
            << ds.layout.dim() << ", " << loaded.rejects.size() << " rejects\n";
}

void Pipeline::run_embed(bool force) {
  if (stage_done("embed") && !force) {
    std::cout << "embed: up to date\n";
    return;
  }
  require("ingest");
  Timer timer;
  auto ds = load_dataset(stage_path("dataset"));
  auto train_idx = ds.indices_of(Split::Train);
  auto val_idx = ds.indices_of(Split::Val);

  AutoencoderTrainOptions opts;
  opts.learning_rate = cfg_.ae_learning_rate;
  opts.max_epochs = cfg_.ae_max_epochs;
  opts.patience = cfg_.ae_patience;
  opts.batch_size = cfg_.ae_batch_size;

  std::vector<std::pair<int, double>> candidates;
  std::vector<SeqAutoencoder> models;
  std::vector<TrainCurve> curves;
  for (size_t i = 0; i < cfg_.embedding_sizes.size(); ++i) {
    int d = cfg_.embedding_sizes[i];
    auto [model, curve] = train_autoencoder(ds.tensors, train_idx, val_idx, d,
                                            mix_seed(cfg_.seed, 20 + i), opts);
    double best_val = curve.val_loss[curve.best_epoch - 1];
    candidates.emplace_back(d, best_val);
    models.push_back(std::move(model));
    curves.push_back(std::move(curve));
    std::cout << "embed: d=" << d << " val_loss=" << best_val << "\n";
  }
  auto choice = select_embedding_size(candidates);
  if (choice.warning)
    std::cerr << "embed: " << choice.message << "\n";
  size_t chosen = 0;
  for (size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].first == choice.embedding_dim) chosen = i;
  const auto& model = models[chosen];
  const auto& curve = curves[chosen];

  std::vector<int> all_idx(ds.size());
  std::iota(all_idx.begin(), all_idx.end(), 0);
  auto embeddings = encode_all(model, ds.tensors, all_idx);

  json ckpt = {
      {"t_steps", model.t_steps},
      {"input_dim", model.input_dim},
      {"embedding_dim", model.embedding_dim},
      {"seed", model.seed},
      {"config_digest", cfg_.digest()},
      {"params", vec_to_json(model.flatten())},
      {"curve",
       {{"train_loss", curve.train_loss},
        {"val_loss", curve.val_loss},
        {"best_epoch", curve.best_epoch}}},
  };
  json sel = json::array();
  for (auto [d, loss] : candidates) sel.push_back({{"d", d}, {"val_loss", loss}});
  ckpt["selection"] = sel;
  ckpt["selected"] = choice.embedding_dim;
  write_atomic(stage_path("autoencoder.json"), ckpt.dump() + "\n");

  std::ostringstream emb;
  emb << "episode_id";
  for (int j = 0; j < model.embedding_dim; ++j) emb << ",e" << j;
  emb << "\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    emb << ds.episode_ids[i];
    for (int j = 0; j < model.embedding_dim; ++j)
      emb << ',' << fmt_prob(embeddings(i, j));
    emb << "\n";
  }
  write_atomic(stage_path("embeddings.csv"), emb.str());
  mark_done("embed", {"autoencoder.json", "embeddings.csv"}, timer.seconds());
  std::cout << "embed: selected d=" << choice.embedding_dim << "\n";
}

namespace {

Eigen::MatrixXd load_embeddings(const std::string& path,
                                const std::vector<std::string>& ids) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::string line;
  std::getline(f, line);
  int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  Eigen::MatrixXd emb(ids.size(), dim);
  size_t row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (row >= ids.size()) throw DataError("too many embedding rows");
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    if (tok != ids[row])
      throw DataError("embedding row order mismatch at " + tok);
    for (int j = 0; j < dim; ++j) {
      std::getline(ss, tok, ',');
      emb(row, j) = std::stod(tok);
    }
    ++row;
  }
  if (row != ids.size()) throw DataError("missing embedding rows");
  return emb;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& resp) {
  std::vector<int> out(resp.rows());
  for (int i = 0; i < resp.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < resp.cols(); ++c)
      if (resp(i, c) > resp(i, best)) best = c;
    out[i] = best;
  }
  return out;
}

}  // namespace

void Pipeline::run_cluster(bool force) {
  if (stage_done("cluster") && !force) {
    std::cout << "cluster: up to date\n";
    return;
  }
  require("embed");
  Timer timer;
  auto ds = load_dataset(stage_path("dataset"));
  auto emb = load_embeddings(stage_path("embeddings.csv"), ds.episode_ids);
  auto train_idx = ds.indices_of(Split::Train);
  auto val_idx = ds.indices_of(Split::Val);
  auto emb_train = rows_of(emb, train_idx);

  GmmFitOptions gopts;
  gopts.restarts = cfg_.gmm_restarts;
  gopts.variance_floor_rel = kEmbeddingVarianceFloor;

  json selection = json::array();
  int k_star = cfg_.k_candidates[0];
  if (cfg_.k_candidates.size() > 1) {
    // downstream selection: clusters as tasks, validation macro-AUC
    ModelVariant sel_variant = variant_from_name(cfg_.variant);
    if (sel_variant == ModelVariant::Global ||
        sel_variant == ModelVariant::Separate)
      sel_variant = ModelVariant::MtSharedDense;
    PredictorTrainOptions popts;
    popts.learning_rate = cfg_.pred_learning_rate;
    popts.max_epochs = cfg_.select_epochs;
    popts.patience = cfg_.pred_patience;
    popts.batch_size = cfg_.pred_batch_size;
    int trunk = *std::min_element(cfg_.trunk_grid.begin(), cfg_.trunk_grid.end());
    int head =
        *std::min_element(cfg_.mt_head_grid.begin(), cfg_.mt_head_grid.end());

    std::vector<std::pair<int, double>> scored;
    for (size_t i = 0; i < cfg_.k_candidates.size(); ++i) {
      int k = cfg_.k_candidates[i];
      auto fit = fit_gmm(emb_train, k, mix_seed(cfg_.seed, 30 + k), gopts);
      auto resp = gmm_responsibilities(fit.model, emb);
      auto cohorts = argmax_rows(resp);
      try {
        auto tp = train_model(sel_variant, ds.tensors, ds.labels, cohorts, k,
                              train_idx, val_idx, trunk, head,
                              mix_seed(cfg_.seed, 60 + k), popts);
        GroupedPredictions val_preds;
        val_preds.scores.resize(k);
        val_preds.labels.resize(k);
        for (int i2 : val_idx) {
          double p = tp.predict(ds.tensors[i2], cohorts[i2]);
          val_preds.scores[cohorts[i2]].push_back(p);
          val_preds.labels[cohorts[i2]].push_back(ds.labels[i2]);
        }
        double score = macro_metric(val_preds, Metric::Auc);
        scored.emplace_back(k, score);
        selection.push_back({{"k", k}, {"val_macro_auc", score}});
        std::cout << "cluster: K=" << k << " val macro-AUC=" << score << "\n";
      } catch (const UndefinedMetric& e) {
        selection.push_back({{"k", k}, {"skipped", e.what()}});
        std::cerr << "cluster: K=" << k << " skipped: " << e.what() << "\n";
      }
    }
    if (scored.empty())
      throw NumericError("no cluster count produced a defined validation score");
    k_star = select_num_clusters(scored);
  }

  // refit on the full training split (train + val) with the chosen K
  std::vector<int> trainval = train_idx;
  trainval.insert(trainval.end(), val_idx.begin(), val_idx.end());
  std::sort(trainval.begin(), trainval.end());
  auto fit = fit_gmm(rows_of(emb, trainval), k_star,
                     mix_seed(cfg_.seed, 31), gopts);
  auto resp = gmm_responsibilities(fit.model, emb);
  auto cohorts = argmax_rows(resp);

  json gj = {
      {"k", fit.model.k},
      {"dim", fit.model.dim()},
      {"weights", vec_to_json(fit.model.weights)},
      {"means", vec_to_json(Eigen::Map<const Eigen::VectorXd>(
                    fit.model.means.data(), fit.model.means.size()))},
      {"variances", vec_to_json(Eigen::Map<const Eigen::VectorXd>(
                        fit.model.variances.data(), fit.model.variances.size()))},
      {"seed", fit.model.seed},
      {"restarts", fit.model.restarts},
      {"best_log_likelihood", fit.model.best_log_likelihood},
      {"restart_log_likelihoods", fit.model.restart_log_likelihoods},
      {"k_selection", selection},
      {"config_digest", cfg_.digest()},
  };
  write_atomic(stage_path("gmm.json"), gj.dump(2) + "\n");

  std::ostringstream out;
  out << "episode_id,cohort_id";
  for (int c = 0; c < k_star; ++c) out << ",r" << c;
  out << "\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    out << ds.episode_ids[i] << ',' << cohorts[i];
    for (int c = 0; c < k_star; ++c) out << ',' << fmt_prob(resp(i, c));
    out << "\n";
  }
  write_atomic(stage_path("assignments.csv"), out.str());
  mark_done("cluster", {"gmm.json", "assignments.csv"}, timer.seconds());
  std::cout << "cluster: K=" << k_star
            << " log-likelihood=" << fit.model.best_log_likelihood << "\n";
}

namespace {

std::vector<int> load_assignments(const std::string& path,
                                  const std::vector<std::string>& ids,
                                  int* k_out) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::string line;
  std::getline(f, line);
  *k_out = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
  std::vector<int> cohorts(ids.size(), -1);
  size_t row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    std::string id = line.substr(0, c1);
    if (row >= ids.size() || id != ids[row])
      throw DataError("assignment row order mismatch at " + id);
    cohorts[row] = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    ++row;
  }
  if (row != ids.size()) throw DataError("missing assignment rows");
  return cohorts;
}

json model_to_json(const RiskModel& m) {
  return {{"variant", variant_name(m.variant)},
          {"k", m.k},
          {"t_steps", m.t_steps},
          {"input_dim", m.input_dim},
          {"trunk_dim", m.trunk_dim},
          {"head_dim", m.head_dim},
          {"seed", m.seed},
          {"params", vec_to_json(m.flatten())}};
}

std::vector<double> predict_split(const TrainedPredictor& tp,
                                  const TaskDataset& ds,
                                  const std::vector<int>& cohorts,
                                  const std::vector<int>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (int i : idx) {
    std::optional<int> c;
    if (tp.variant != ModelVariant::Global) c = cohorts[i];
    out.push_back(tp.predict(ds.tensors[i], c));
  }
  return out;
}

}  // namespace

void Pipeline::run_train(bool force) {
  if (stage_done("train") && !force) {
    std::cout << "train: up to date\n";
    return;
  }
  require("cluster");
  Timer timer;
  auto ds = load_dataset(stage_path("dataset"));
  int k = 0;
  auto cohorts = load_assignments(stage_path("assignments.csv"),
                                  ds.episode_ids, &k);
  auto train_idx = ds.indices_of(Split::Train);
  auto val_idx = ds.indices_of(Split::Val);
  auto test_idx = ds.indices_of(Split::Test);
  std::vector<int> trainval = train_idx;
  trainval.insert(trainval.end(), val_idx.begin(), val_idx.end());
  std::sort(trainval.begin(), trainval.end());

  PredictorTrainOptions popts;
  popts.learning_rate = cfg_.pred_learning_rate;
  popts.max_epochs = cfg_.pred_max_epochs;
  popts.patience = cfg_.pred_patience;
  popts.batch_size = cfg_.pred_batch_size;

  ModelVariant mt_variant = variant_from_name(cfg_.variant);
  if (mt_variant == ModelVariant::Global)
    throw ConfigError("configured variant must be cohort-aware");

  auto grid_of = [](const std::vector<int>& trunks,
                    const std::vector<int>& heads) {
    std::vector<GridPoint> g;
    for (int t : trunks)
      for (int h : heads) g.push_back({t, h});
    return g;
  };
  auto g_grid = grid_of(cfg_.trunk_grid, cfg_.global_dense_grid);
  auto m_grid = grid_of(cfg_.trunk_grid, cfg_.mt_head_grid);

  json grids = json::object();
  GridPoint g_best = g_grid[0], m_best = m_grid[0];
  // single-point grids skip the 5-split search; the configuration is pinned
  if (g_grid.size() > 1) {
    auto res = grid_search(ModelVariant::Global, ds.tensors, ds.labels, {}, 1,
                           trainval, g_grid, mix_seed(cfg_.seed, 50), popts,
                           cfg_.grid_splits);
    g_best = res.best;
    json rows = json::array();
    for (const auto& r : res.table)
      rows.push_back({{"trunk", r.point.trunk_dim},
                      {"head", r.point.head_dim},
                      {"mean_auc", r.mean_auc},
                      {"split_aucs", r.split_aucs},
                      {"failed", r.failed}});
    grids["global"] = rows;
  }
  if (m_grid.size() > 1) {
    auto res = grid_search(mt_variant, ds.tensors, ds.labels, cohorts, k,
                           trainval, m_grid, mix_seed(cfg_.seed, 51), popts,
                           cfg_.grid_splits);
    m_best = res.best;
    json rows = json::array();
    for (const auto& r : res.table)
      rows.push_back({{"trunk", r.point.trunk_dim},
                      {"head", r.point.head_dim},
                      {"mean_auc", r.mean_auc},
                      {"split_aucs", r.split_aucs},
                      {"failed", r.failed}});
    grids["multitask"] = rows;
  }

  auto global_model =
      train_model(ModelVariant::Global, ds.tensors, ds.labels, {}, 1,
                  train_idx, val_idx, g_best.trunk_dim, g_best.head_dim,
                  mix_seed(cfg_.seed, 40), popts);
  auto mt_model = train_model(mt_variant, ds.tensors, ds.labels, cohorts, k,
                              train_idx, val_idx, m_best.trunk_dim,
                              m_best.head_dim, mix_seed(cfg_.seed, 41), popts);

  json mj = {{"global", json::array()},
             {"multitask", json::array()},
             {"grid", grids},
             {"global_config",
              {{"trunk", g_best.trunk_dim}, {"head", g_best.head_dim}}},
             {"multitask_config",
              {{"trunk", m_best.trunk_dim}, {"head", m_best.head_dim}}},
             {"config_digest", cfg_.digest()}};
  for (const auto& m : global_model.models)
    mj["global"].push_back(model_to_json(m));
  for (const auto& m : mt_model.models)
    mj["multitask"].push_back(model_to_json(m));
  write_atomic(stage_path("models.json"), mj.dump() + "\n");

  // predictions for the val and test splits, both models
  std::ostringstream out;
  out << "episode_id,cohort_id,label,split,p_global,p_multitask\n";
  const std::pair<std::string, const std::vector<int>*> split_sets[] = {
      {"val", &val_idx}, {"test", &test_idx}};
  for (const auto& [split_name, idx_ptr] : split_sets) {
    const auto& idx = *idx_ptr;
    auto pg = predict_split(global_model, ds, cohorts, idx);
    auto pm = predict_split(mt_model, ds, cohorts, idx);
    for (size_t i = 0; i < idx.size(); ++i)
      out << ds.episode_ids[idx[i]] << ',' << cohorts[idx[i]] << ','
          << ds.labels[idx[i]] << ',' << split_name << ',' << fmt_prob(pg[i])
          << ',' << fmt_prob(pm[i]) << "\n";
  }
  write_atomic(stage_path("predictions.csv"), out.str());
  mark_done("train", {"models.json", "predictions.csv"}, timer.seconds());
  std::cout << "train: global trunk=" << g_best.trunk_dim
            << " dense=" << g_best.head_dim
            << "; multitask trunk=" << m_best.trunk_dim
            << " head=" << m_best.head_dim << "\n";
}

namespace {

struct PredictionRows {
  GroupedPredictions test_global, test_mt, val_global, val_mt;
  int k = 0;
};

PredictionRows load_predictions(const std::string& path, int k) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  PredictionRows rows;
  rows.k = k;
  for (auto* g : {&rows.test_global, &rows.test_mt, &rows.val_global,
                  &rows.val_mt}) {
    g->scores.resize(k);
    g->labels.resize(k);
  }
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, cohort, label, split, pg, pm;
    std::getline(ss, id, ',');
    std::getline(ss, cohort, ',');
    std::getline(ss, label, ',');
    std::getline(ss, split, ',');
    std::getline(ss, pg, ',');
    std::getline(ss, pm, ',');
    int c = std::stoi(cohort);
    int y = std::stoi(label);
    auto& gg = split == "test" ? rows.test_global : rows.val_global;
    auto& gm = split == "test" ? rows.test_mt : rows.val_mt;
    gg.scores[c].push_back(std::stod(pg));
    gg.labels[c].push_back(y);
    gm.scores[c].push_back(std::stod(pm));
    gm.labels[c].push_back(y);
  }
  return rows;
}

}  // namespace

void Pipeline::run_evaluate(bool force) {
  if (stage_done("evaluate") && !force) {
    std::cout << "evaluate: up to date\n";
    return;
  }
  require("train");
  Timer timer;
  json gj = json::parse(read_file(stage_path("gmm.json")));
  int k = gj.at("k");
  auto rows = load_predictions(stage_path("predictions.csv"), k);

  FixedThresholds fa, fb;
  const FixedThresholds* pfa = nullptr;
  const FixedThresholds* pfb = nullptr;
  if (cfg_.threshold_mode == "validation") {
    fa = derive_thresholds(rows.val_global, cfg_.sensitivity_target);
    fb = derive_thresholds(rows.val_mt, cfg_.sensitivity_target);
    pfa = &fa;
    pfb = &fb;
  }
  auto table = compare_models(rows.test_global, rows.test_mt, cfg_.n_bootstrap,
                              mix_seed(cfg_.seed, 70), cfg_.sensitivity_target,
                              pfa, pfb);

  ReportContext ctx;
  ctx.title = std::to_string(cfg_.window_hours) +
              " Hour Mortality Prediction: Global vs Multi-task";
  ctx.config_digest = cfg_.digest();
  ctx.threshold_mode = cfg_.threshold_mode;
  ctx.window_hours = cfg_.window_hours;
  ctx.gap_hours = cfg_.gap_hours;
  for (int c = 0; c < k; ++c) {
    CohortSummary s;
    s.size = static_cast<int>(rows.test_global.labels[c].size());
    for (int y : rows.test_global.labels[c]) s.positives += y;
    ctx.cohorts.push_back(s);
  }
  write_atomic(stage_path("evaluation.json"), render_report_json(table, ctx));
  mark_done("evaluate", {"evaluation.json"}, timer.seconds());
  std::cout << "evaluate: " << table.cells.size() << " comparison cells\n";
}

void Pipeline::run_report(bool force) {
  if (stage_done("report") && !force) {
    std::cout << "report: up to date\n";
    return;
  }
  require("evaluate");
  Timer timer;
  json ev = json::parse(read_file(stage_path("evaluation.json")));

  ComparisonTable table;
  table.n_bootstrap = ev.at("n_bootstrap");
  for (const auto& cj : ev.at("cells")) {
    ComparisonCell c;
    c.scope = cj.at("scope");
    std::string m = cj.at("metric");
    c.metric = m == "AUC" ? Metric::Auc
                          : (m == "PPV" ? Metric::Ppv : Metric::Specificity);
    auto num = [](const json& v) {  // NaN serializes as null
      return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                         : v.get<double>();
    };
    c.value_a = num(cj.at("value_a"));
    c.value_b = num(cj.at("value_b"));
    c.p = cj.at("p");
    c.tier = cj.at("tier");
    c.winner = cj.at("winner");
    c.degenerate = cj.at("degenerate");
    c.series_a = cj.at("series_a").get<std::vector<double>>();
    c.series_b = cj.at("series_b").get<std::vector<double>>();
    table.cells.push_back(std::move(c));
  }
  ReportContext ctx;
  ctx.title = ev.at("title");
  ctx.config_digest = ev.at("config_digest");
  ctx.threshold_mode = ev.at("threshold_mode");
  ctx.window_hours = ev.at("window_hours");
  ctx.gap_hours = ev.at("gap_hours");
  for (const auto& cj : ev.at("cohorts")) {
    CohortSummary s;
    s.size = cj.at("size");
    s.positives = cj.at("positives");
    ctx.cohorts.push_back(s);
  }
  write_atomic(stage_path("report.txt"), render_report_text(table, ctx));
  write_atomic(stage_path("report.json"), render_report_json(table, ctx));

  auto ds = load_dataset(stage_path("dataset"));
  int k = 0;
  auto cohorts = load_assignments(stage_path("assignments.csv"),
                                  ds.episode_ids, &k);
  std::vector<int> features;
  for (const auto& name : cfg_.plot_features)
    features.push_back(*feature_index(name));
  emit_centroid_plots(ds, cohorts, k, features, stage_path("centroids"));

  mark_done("report", {"report.txt", "report.json", "centroids"},
            timer.seconds());
  std::cout << "report: written to " << stage_path("report.txt") << "\n";
}

void Pipeline::run_all(bool force) {
  run_synth(force);
  run_ingest(force);
  run_embed(force);
  run_cluster(force);
  run_train(force);
  run_evaluate(force);
  run_report(force);
}

}  // namespace cohortmt
