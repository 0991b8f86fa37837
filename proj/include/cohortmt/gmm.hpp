#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace cohortmt {

struct KmeansResult {
  Eigen::MatrixXd means;           // K x d
  std::vector<int> assignments;    // per point
  int iterations = 0;
};

// Lloyd's algorithm. Initial means sampled from distinct points; empty
// clusters are reseeded from the farthest point.
KmeansResult kmeans_init(const Eigen::MatrixXd& points, int k,
                         std::uint64_t seed, int max_iters = 100);

struct GmmModel {
  int k = 0;
  Eigen::VectorXd weights;      // K, sums to 1
  Eigen::MatrixXd means;        // K x d
  Eigen::MatrixXd variances;    // K x d, diagonal covariances
  // fit metadata
  int restarts = 0;
  double best_log_likelihood = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> restart_log_likelihoods;

  int dim() const { return static_cast<int>(means.cols()); }
};

struct GmmFitOptions {
  int restarts = 30;
  int max_iters = 200;
  double tol = 1e-6;             // abort when mean log-lik change is below
  // Per-dimension variance floor, relative to the data variance. The tiny
  // default only guards against singular components; cluster discovery on
  // embeddings uses a much larger floor (see kEmbeddingVarianceFloor):
  // near-discrete attributes saturate in the embedding, and a component
  // that isolates one such attribute value would otherwise get an unbounded
  // log-likelihood advantage over broader cluster structure.
  double variance_floor_rel = 1e-6;
};

// Variance floor used when fitting mixtures to autoencoder embeddings.
inline constexpr double kEmbeddingVarianceFloor = 0.2;

// EM with k-means initialization per restart; returns the restart with the
// highest training log-likelihood. Also records the per-iteration total
// log-likelihood of the winning restart (non-decreasing).
struct GmmFitResult {
  GmmModel model;
  std::vector<double> log_likelihood_trace;
};

GmmFitResult fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                     const GmmFitOptions& options = {});

struct CohortAssignment {
  int cohort_id = 0;
  Eigen::VectorXd responsibilities;  // K, sums to 1
};

// Posterior responsibilities under the mixture; argmax, ties to lower id.
CohortAssignment assign_cohort(const GmmModel& model,
                               const Eigen::VectorXd& embedding);

// Posterior responsibilities for all rows of `points` (n x K).
Eigen::MatrixXd gmm_responsibilities(const GmmModel& model,
                                     const Eigen::MatrixXd& points);
Eigen::MatrixXd gmm_responsibilities_serial(const GmmModel& model,
                                            const Eigen::MatrixXd& points);

double gmm_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& points);

// argmax over candidate (K, validation macro-AUC) pairs; ties toward
// smaller K.
int select_num_clusters(const std::vector<std::pair<int, double>>& candidates);

}  // namespace cohortmt
