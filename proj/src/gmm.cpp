#include <cmath>
#include <iostream>
#include <limits>

#include "cohortmt/common.hpp"
#include "cohortmt/gmm.hpp"

namespace cohortmt {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// per-point log densities (n x K): log w_k + log N(x | m_k, diag v_k)
Eigen::MatrixXd log_joint(const GmmModel& model, const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  const int k = model.k;
  Eigen::MatrixXd out(n, k);
  for (int c = 0; c < k; ++c) {
    double cst = std::log(model.weights(c)) -
                 0.5 * (model.variances.row(c).array().log() + kLog2Pi).sum();
    Eigen::MatrixXd centered = points.rowwise() - model.means.row(c);
    out.col(c) =
        (centered.array().square().rowwise() /
         model.variances.row(c).array())
            .rowwise()
            .sum()
            .matrix() *
        -0.5;
    out.col(c).array() += cst;
  }
  return out;
}

// row-wise: responsibilities and per-point log-likelihood
void normalize_rows(Eigen::MatrixXd& lj, Eigen::VectorXd& point_ll,
                    bool parallel) {
  const int n = static_cast<int>(lj.rows());
  point_ll.resize(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    double mx = lj.row(i).maxCoeff();
    double s = (lj.row(i).array() - mx).exp().sum();
    double lse = mx + std::log(s);
    point_ll(i) = lse;
    lj.row(i) = (lj.row(i).array() - lse).exp();
  }
}

Eigen::MatrixXd responsibilities_impl(const GmmModel& model,
                                      const Eigen::MatrixXd& points,
                                      bool parallel) {
  Eigen::MatrixXd lj = log_joint(model, points);
  Eigen::VectorXd ll;
  normalize_rows(lj, ll, parallel);
  return lj;
}

}  // namespace

Eigen::MatrixXd gmm_responsibilities(const GmmModel& model,
                                     const Eigen::MatrixXd& points) {
  return responsibilities_impl(model, points, true);
}

Eigen::MatrixXd gmm_responsibilities_serial(const GmmModel& model,
                                            const Eigen::MatrixXd& points) {
  return responsibilities_impl(model, points, false);
}

double gmm_log_likelihood(const GmmModel& model,
                          const Eigen::MatrixXd& points) {
  Eigen::MatrixXd lj = log_joint(model, points);
  double total = 0.0;
  for (int i = 0; i < lj.rows(); ++i) {
    double mx = lj.row(i).maxCoeff();
    total += mx + std::log((lj.row(i).array() - mx).exp().sum());
  }
  return total;
}

CohortAssignment assign_cohort(const GmmModel& model,
                               const Eigen::VectorXd& embedding) {
  if (embedding.size() != model.dim())
    throw DataError("embedding dimension does not match mixture model");
  Eigen::MatrixXd resp =
      gmm_responsibilities_serial(model, embedding.transpose());
  CohortAssignment a;
  a.responsibilities = resp.row(0);
  a.cohort_id = 0;
  for (int c = 1; c < model.k; ++c)
    if (a.responsibilities(c) > a.responsibilities(a.cohort_id))
      a.cohort_id = c;  // strict >: ties stay at the lower id
  return a;
}

GmmFitResult fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                     const GmmFitOptions& options) {
  if (options.restarts < 1) throw ConfigError("restarts must be >= 1");
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (n < k) throw DataError("fewer points than components");

  Eigen::RowVectorXd data_mean = points.colwise().mean();
  Eigen::RowVectorXd data_var =
      (points.rowwise() - data_mean).array().square().colwise().mean();
  Eigen::RowVectorXd floor =
      (data_var.array() * options.variance_floor_rel).max(1e-12);

  GmmFitResult best;
  best.model.best_log_likelihood = -std::numeric_limits<double>::infinity();

  for (int r = 0; r < options.restarts; ++r) {
    std::uint64_t restart_seed = mix_seed(seed, r);
    GmmModel m;
    m.k = k;
    m.seed = seed;
    auto km = kmeans_init(points, k, restart_seed);
    m.means = km.means;
    m.weights.resize(k);
    m.variances.resize(k, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(k, d);
    for (int i = 0; i < n; ++i) {
      int c = km.assignments[i];
      counts(c) += 1.0;
      ss.row(c) += (points.row(i) - m.means.row(c)).array().square().matrix();
    }
    for (int c = 0; c < k; ++c) {
      m.weights(c) = counts(c) / n;
      m.variances.row(c) =
          (ss.row(c).array() / std::max(counts(c), 1.0)).max(floor.array());
    }

    std::vector<double> trace;
    double prev_ll = -std::numeric_limits<double>::infinity();
    bool discarded = false;
    for (int iter = 0; iter < options.max_iters; ++iter) {
      Eigen::MatrixXd resp = log_joint(m, points);
      Eigen::VectorXd point_ll;
      normalize_rows(resp, point_ll, true);
      double ll = point_ll.sum();
      if (!std::isfinite(ll)) {
        std::cerr << "warning: non-finite likelihood, discarding restart " << r
                  << "\n";
        discarded = true;
        break;
      }
      trace.push_back(ll);
      // converged: stop before the M-step so the recorded likelihood
      // matches the returned parameters
      if (std::abs(ll - prev_ll) / n < options.tol) break;
      prev_ll = ll;
      Eigen::VectorXd nk = resp.colwise().sum();
      m.weights = nk / n;
      for (int c = 0; c < k; ++c) {
        double denom = std::max(nk(c), 1e-300);
        m.means.row(c) = (resp.col(c).transpose() * points) / denom;
        Eigen::MatrixXd centered = points.rowwise() - m.means.row(c);
        m.variances.row(c) =
            ((centered.array().square().colwise() * resp.col(c).array())
                 .colwise()
                 .sum() /
             denom)
                .max(floor.array());
      }
    }
    if (discarded || trace.empty()) {
      best.model.restart_log_likelihoods.push_back(
          std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double final_ll = trace.back();
    best.model.restart_log_likelihoods.push_back(final_ll);
    if (final_ll > best.model.best_log_likelihood) {
      auto saved_lls = std::move(best.model.restart_log_likelihoods);
      best.model = std::move(m);
      best.model.best_log_likelihood = final_ll;
      best.model.restart_log_likelihoods = std::move(saved_lls);
      best.model.seed = seed;
      best.log_likelihood_trace = std::move(trace);
    }
  }
  if (!std::isfinite(best.model.best_log_likelihood))
    throw NumericError("every GMM restart diverged");
  best.model.restarts = options.restarts;
  return best;
}

int select_num_clusters(const std::vector<std::pair<int, double>>& candidates) {
  if (candidates.empty()) throw ConfigError("no candidate cluster counts");
  int best_k = candidates[0].first;
  double best_score = candidates[0].second;
  for (const auto& [k, score] : candidates) {
    if (score > best_score || (score == best_score && k < best_k)) {
      best_k = k;
      best_score = score;
    }
  }
  return best_k;
}

}  // namespace cohortmt
