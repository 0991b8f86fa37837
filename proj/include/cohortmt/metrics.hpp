#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace cohortmt {

// A metric that is undefined on the given input (single-class cohort,
// zero predicted positives, ...). Callers decide whether to skip or abort.
struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank-based AUC, ties counted 1/2. Requires both classes present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Largest threshold t with sensitivity(score >= t) >= target.
double threshold_at_sensitivity(std::span<const double> scores,
                                std::span<const int> labels,
                                double target = 0.80);

struct PpvSpecificity {
  double ppv = 0.0;
  double specificity = 0.0;
};

// Confusion-matrix PPV and specificity with the score >= threshold rule.
PpvSpecificity ppv_specificity(std::span<const double> scores,
                               std::span<const int> labels, double threshold);

// Per-cohort predicted probabilities and binary labels.
struct GroupedPredictions {
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<int>> labels;

  int num_groups() const { return static_cast<int>(scores.size()); }
  void concat(std::vector<double>& s, std::vector<int>& l) const;
};

enum class Metric { Auc, Ppv, Specificity };

double metric_value(Metric m, std::span<const double> scores,
                    std::span<const int> labels, double sensitivity_target);

// Metric on the pooled predictions; one global threshold for PPV/specificity.
double micro_metric(const GroupedPredictions& grouped, Metric m,
                    double sensitivity_target = 0.80);

// Unweighted mean of per-cohort metrics, thresholds per cohort.
double macro_metric(const GroupedPredictions& grouped, Metric m,
                    double sensitivity_target = 0.80);

}  // namespace cohortmt
