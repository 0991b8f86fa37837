#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cohortmt/metrics.hpp"

namespace cohortmt {

struct WilcoxonResult {
  double w_plus = 0.0;
  double statistic = 0.0;  // min(W+, W-)
  double p = 1.0;          // two-sided
  int n_used = 0;          // nonzero differences
  bool exact = false;
};

// Zero differences dropped, ties mid-ranked. Exact enumeration (via the
// signed-rank sum distribution) for n <= 25, normal approximation with
// continuity correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs);

// With-replacement resample preserving each cohort's size and positive
// count exactly. indices[k] index into cohort k's arrays.
struct BootstrapSample {
  std::vector<std::vector<int>> indices;
  std::uint64_t seed = 0;
};

BootstrapSample bootstrap_resample(const GroupedPredictions& grouped,
                                   std::uint64_t seed);

GroupedPredictions apply_sample(const GroupedPredictions& grouped,
                                const BootstrapSample& sample);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// Significance tier symbols used in the report tables.
std::string significance_tier(double p);

struct ComparisonCell {
  std::string scope;  // "cohort <k>", "macro", "micro"
  Metric metric = Metric::Auc;
  double value_a = 0.0;  // point estimates on the full test set
  double value_b = 0.0;
  double p = 1.0;
  std::string tier;
  int winner = 0;  // 0 = no significant difference, 1 = A, 2 = B
  bool degenerate = false;
  std::vector<double> series_a;  // per-bootstrap metric values
  std::vector<double> series_b;
};

struct ComparisonTable {
  int n_bootstrap = 0;
  std::uint64_t seed = 0;
  std::vector<ComparisonCell> cells;
};

// Operating points fixed up front (e.g. from validation predictions)
// instead of being re-derived from the predictions under evaluation.
struct FixedThresholds {
  std::vector<double> per_cohort;
  double pooled = 0.5;
};

// Paired bootstrap comparison of two prediction sets over the same
// episodes: per metric x (per-cohort, macro, micro), Wilcoxon signed-rank
// over the bootstrap series; winner flagged when p < 0.01. When fixed
// thresholds are supplied, PPV/specificity use them for that model.
ComparisonTable compare_models(const GroupedPredictions& preds_a,
                               const GroupedPredictions& preds_b,
                               int n_bootstrap = 100, std::uint64_t seed = 1,
                               double sensitivity_target = 0.80,
                               const FixedThresholds* fixed_a = nullptr,
                               const FixedThresholds* fixed_b = nullptr);

// Serial reference for the parallel bootstrap-series kernel inside
// compare_models; kept for equivalence testing and benchmarking.
ComparisonTable compare_models_serial(const GroupedPredictions& preds_a,
                                      const GroupedPredictions& preds_b,
                                      int n_bootstrap = 100,
                                      std::uint64_t seed = 1,
                                      double sensitivity_target = 0.80,
                                      const FixedThresholds* fixed_a = nullptr,
                                      const FixedThresholds* fixed_b = nullptr);

// Thresholds at the sensitivity target derived from one prediction set
// (per cohort and pooled), for the validation-threshold mode.
FixedThresholds derive_thresholds(const GroupedPredictions& preds,
                                  double sensitivity_target = 0.80);

}  // namespace cohortmt
