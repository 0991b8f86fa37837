#include <algorithm>
#include <limits>
#include <set>

#include "cohortmt/common.hpp"
#include "cohortmt/gmm.hpp"

namespace cohortmt {

KmeansResult kmeans_init(const Eigen::MatrixXd& points, int k,
                         std::uint64_t seed, int max_iters) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw ConfigError("k must be >= 1");
  if (n < k) throw DataError("fewer points than clusters");

  // distinct rows, first occurrence order
  std::vector<int> distinct;
  {
    std::set<std::vector<double>> seen;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(points.row(i).begin(), points.row(i).end());
      if (seen.insert(std::move(row)).second) distinct.push_back(i);
    }
  }
  if (static_cast<int>(distinct.size()) < k)
    throw DataError("fewer distinct points than clusters");

  auto rng = make_rng(seed, 0);
  std::shuffle(distinct.begin(), distinct.end(), rng);

  KmeansResult res;
  res.means.resize(k, points.cols());
  for (int c = 0; c < k; ++c) res.means.row(c) = points.row(distinct[c]);
  res.assignments.assign(n, 0);

  std::vector<double> dist_to_center(n, 0.0);
  for (int iter = 0; iter < max_iters; ++iter) {
    res.iterations = iter + 1;
    bool changed = false;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = (points.row(i) - res.means.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist_to_center[i] = best_d;
      if (res.assignments[i] != best) {
        res.assignments[i] = best;
#pragma omp atomic write
        changed = true;
      }
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(res.assignments[i]) += points.row(i);
      counts[res.assignments[i]] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed from the farthest point
        int far = static_cast<int>(std::max_element(dist_to_center.begin(),
                                                    dist_to_center.end()) -
                                   dist_to_center.begin());
        res.means.row(c) = points.row(far);
        res.assignments[far] = c;
        dist_to_center[far] = 0.0;
        changed = true;
      } else {
        res.means.row(c) = sums.row(c) / counts[c];
      }
    }
    if (!changed) break;
  }
  return res;
}

}  // namespace cohortmt
