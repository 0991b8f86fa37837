#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cohortmt/ingest.hpp"

namespace cohortmt {

// A stage was requested before its upstream stage completed.
struct MissingUpstream : std::runtime_error {
  std::string stage;
  explicit MissingUpstream(std::string s)
      : std::runtime_error("missing upstream stage: " + s),
        stage(std::move(s)) {}
};

struct ExperimentConfig {
  std::string stage_dir = "run";

  // data inputs; empty means "use the synth stage outputs in stage_dir"
  std::string episodes_path;
  std::string measurements_path;
  std::string truth_path;

  // ingestion
  int window_hours = 24;
  int gap_hours = 12;
  BucketSpec buckets;
  double test_frac = 0.2;
  int val_denominator = 8;
  int min_positives = 8;
  int ethnicity_top_k = 5;
  bool sample_std = false;

  // synth
  int synth_n = 3000;
  double synth_separation = 1.0;

  // autoencoder
  std::vector<int> embedding_sizes = {16};
  double ae_learning_rate = 0.001;
  int ae_max_epochs = 100;
  int ae_patience = 6;
  int ae_batch_size = 128;

  // gmm
  std::vector<int> k_candidates = {2, 3, 4, 5};
  int gmm_restarts = 30;
  int select_epochs = 20;  // epoch cap for the K-selection predictor

  // predictor
  std::string variant = "multitask_shared_dense";
  std::vector<int> trunk_grid = {16, 32, 64, 128};
  std::vector<int> global_dense_grid = {16, 32, 64};
  std::vector<int> mt_head_grid = {8, 16, 32};
  double pred_learning_rate = 0.0001;
  int pred_max_epochs = 100;
  int pred_patience = 6;
  int pred_batch_size = 128;
  int grid_splits = 5;

  // evaluation
  double sensitivity_target = 0.80;
  int n_bootstrap = 100;
  std::string threshold_mode = "test";  // or "validation"
  std::vector<std::string> plot_features = {
      "heart_rate", "systolic_blood_pressure", "lactate", "glucose",
      "magnesium"};

  std::uint64_t seed = 1;

  static ExperimentConfig from_file(const std::string& path);
  std::string to_json_string() const;
  std::string digest() const;
  void validate() const;
};

// Stage orchestration over a stage directory with a manifest; every
// artifact write is atomic and stamped with the config digest.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  void run_synth(bool force = false);
  void run_ingest(bool force = false);
  void run_embed(bool force = false);
  void run_cluster(bool force = false);
  void run_train(bool force = false);
  void run_evaluate(bool force = false);
  void run_report(bool force = false);
  void run_all(bool force = false);

  const ExperimentConfig& config() const { return cfg_; }
  std::string stage_path(const std::string& name) const;

 private:
  ExperimentConfig cfg_;

  bool stage_done(const std::string& stage) const;
  void require(const std::string& stage) const;
  void mark_done(const std::string& stage,
                 const std::vector<std::string>& artifacts, double seconds);
};

}  // namespace cohortmt
