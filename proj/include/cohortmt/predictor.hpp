#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cohortmt/autoencoder.hpp"
#include "cohortmt/ingest.hpp"
#include "cohortmt/lstm.hpp"

namespace cohortmt {

enum class ModelVariant { Global, Separate, MtSharedDense, MtSepDense };

std::string variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

// LSTM trunk with ReLU on its final hidden state, then one dense + sigmoid
// head per task. Global has one head; the shared-dense multitask variant
// shares the dense layer and keeps per-task output units; the
// separate-dense variant keeps a full dense + output stack per task.
struct RiskModel {
  ModelVariant variant = ModelVariant::Global;
  int k = 1;
  int t_steps = 0;
  int input_dim = 0;
  int trunk_dim = 0;
  int head_dim = 0;
  std::uint64_t seed = 0;

  LstmParams trunk;
  std::vector<Eigen::MatrixXd> w1;  // dense layers (1 if shared)
  std::vector<Eigen::VectorXd> b1;
  std::vector<Eigen::VectorXd> w2;  // output units (k of them, 1 for global)
  std::vector<double> b2;

  static RiskModel create(ModelVariant variant, int k, int t_steps,
                          int input_dim, int trunk_dim, int head_dim,
                          std::uint64_t seed);

  int num_heads() const { return static_cast<int>(w2.size()); }
  int num_params() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  // Probabilities for a batch; heads[i] routes example i (ignored when the
  // model has a single head).
  Eigen::VectorXd predict_batch(const std::vector<Eigen::MatrixXd>& x,
                                const std::vector<int>& heads) const;
  double predict(const BinaryTensor& tensor,
                 std::optional<int> cohort_id = std::nullopt) const;
};

double predictor_loss(const RiskModel& model,
                      const std::vector<Eigen::MatrixXd>& x,
                      const Eigen::VectorXd& y, const std::vector<int>& heads);

struct PredictorGradResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Mean binary cross-entropy and its analytic gradient. Each example's loss
// flows only through its own head and the shared trunk.
PredictorGradResult predictor_loss_grad(const RiskModel& model,
                                        const std::vector<Eigen::MatrixXd>& x,
                                        const Eigen::VectorXd& y,
                                        const std::vector<int>& heads);

struct PredictorTrainOptions {
  double learning_rate = 0.0001;
  int max_epochs = 100;
  int patience = 6;
  int batch_size = 128;
};

// Either one model (global / multitask) or K per-cohort models (separate).
struct TrainedPredictor {
  ModelVariant variant = ModelVariant::Global;
  int k = 1;
  std::vector<RiskModel> models;
  TrainCurve curve;  // for separate: summed per-cohort curves

  double predict(const BinaryTensor& tensor,
                 std::optional<int> cohort_id = std::nullopt) const;
};

TrainedPredictor train_model(ModelVariant variant,
                             const std::vector<BinaryTensor>& tensors,
                             const std::vector<int>& labels,
                             const std::vector<int>& cohorts, int k,
                             const std::vector<int>& train_indices,
                             const std::vector<int>& val_indices,
                             int trunk_dim, int head_dim, std::uint64_t seed,
                             const PredictorTrainOptions& options = {});

struct GridPoint {
  int trunk_dim = 0;
  int head_dim = 0;
};

struct GridSearchResult {
  GridPoint best;
  struct Row {
    GridPoint point;
    std::vector<double> split_aucs;
    double mean_auc = 0.0;
    long long params = 0;
    bool failed = false;
    std::string note;
  };
  std::vector<Row> table;
};

// Mean validation AUC over 5 random 7:1 train:validation splits per grid
// point; argmax, ties toward fewer parameters. Failing points excluded.
GridSearchResult grid_search(ModelVariant variant,
                             const std::vector<BinaryTensor>& tensors,
                             const std::vector<int>& labels,
                             const std::vector<int>& cohorts, int k,
                             const std::vector<int>& trainval_indices,
                             const std::vector<GridPoint>& grid,
                             std::uint64_t master_seed,
                             const PredictorTrainOptions& options = {},
                             int num_splits = 5);

}  // namespace cohortmt
