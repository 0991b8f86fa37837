#include "cohortmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cohortmt {

double auc(std::span<const double> scores, std::span<const int> labels) {
  const size_t n = scores.size();
  size_t pos = 0;
  for (int y : labels) pos += y;
  size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw UndefinedMetric("AUC requires both classes");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  // mid-rank sum over positives
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += mid_rank;
    i = j;
  }
  double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double threshold_at_sensitivity(std::span<const double> scores,
                                std::span<const int> labels, double target) {
  std::vector<double> pos_scores;
  for (size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) pos_scores.push_back(scores[i]);
  if (pos_scores.empty())
    throw UndefinedMetric("sensitivity threshold requires a positive example");
  std::sort(pos_scores.begin(), pos_scores.end(), std::greater<>());
  // need the m largest positives above (>=) the threshold
  size_t m = static_cast<size_t>(
      std::ceil(target * static_cast<double>(pos_scores.size()) - 1e-12));
  m = std::max<size_t>(m, 1);
  return pos_scores[m - 1];
}

PpvSpecificity ppv_specificity(std::span<const double> scores,
                               std::span<const int> labels, double threshold) {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    if (labels[i])
      pred ? ++tp : ++fn;
    else
      pred ? ++fp : ++tn;
  }
  if (tp + fp == 0) throw UndefinedMetric("no predicted positives; PPV undefined");
  PpvSpecificity r;
  r.ppv = static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.specificity = (tn + fp) == 0
                      ? 0.0
                      : static_cast<double>(tn) / static_cast<double>(tn + fp);
  return r;
}

void GroupedPredictions::concat(std::vector<double>& s,
                                std::vector<int>& l) const {
  s.clear();
  l.clear();
  for (int k = 0; k < num_groups(); ++k) {
    s.insert(s.end(), scores[k].begin(), scores[k].end());
    l.insert(l.end(), labels[k].begin(), labels[k].end());
  }
}

double metric_value(Metric m, std::span<const double> scores,
                    std::span<const int> labels, double sensitivity_target) {
  switch (m) {
    case Metric::Auc:
      return auc(scores, labels);
    case Metric::Ppv:
      return ppv_specificity(scores, labels,
                             threshold_at_sensitivity(scores, labels,
                                                      sensitivity_target))
          .ppv;
    case Metric::Specificity:
      return ppv_specificity(scores, labels,
                             threshold_at_sensitivity(scores, labels,
                                                      sensitivity_target))
          .specificity;
  }
  throw std::logic_error("unreachable");
}

double micro_metric(const GroupedPredictions& grouped, Metric m,
                    double sensitivity_target) {
  if (grouped.num_groups() == 0)
    throw UndefinedMetric("micro metric on empty grouping");
  std::vector<double> s;
  std::vector<int> l;
  grouped.concat(s, l);
  return metric_value(m, s, l, sensitivity_target);
}

double macro_metric(const GroupedPredictions& grouped, Metric m,
                    double sensitivity_target) {
  const int k = grouped.num_groups();
  if (k == 0) throw UndefinedMetric("macro metric on empty grouping");
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    try {
      sum += metric_value(m, grouped.scores[i], grouped.labels[i],
                          sensitivity_target);
    } catch (const UndefinedMetric& e) {
      throw UndefinedMetric("cohort " + std::to_string(i) + ": " + e.what());
    }
  }
  return sum / static_cast<double>(k);
}

}  // namespace cohortmt
