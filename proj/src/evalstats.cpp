#include "cohortmt/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cohortmt/common.hpp"

namespace cohortmt {

WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0.0) d.push_back(v);
  if (d.empty())
    throw UndefinedMetric("all differences are zero; signed-rank p undefined");

  const int n = static_cast<int>(d.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(d[a]) < std::abs(d[b]);
  });
  // doubled mid-ranks stay integral under ties
  std::vector<long long> rank2(n, 0);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    long long r2 = i + 1 + j;  // 2 * mid-rank
    for (int k = i; k < j; ++k) rank2[order[k]] = r2;
    i = j;
  }
  double w_plus2 = 0.0;
  for (int k = 0; k < n; ++k)
    if (d[k] > 0) w_plus2 += static_cast<double>(rank2[k]);

  WilcoxonResult res;
  res.n_used = n;
  res.w_plus = w_plus2 / 2.0;
  const double total2 = static_cast<double>(n) * (n + 1);
  res.statistic = std::min(res.w_plus, total2 / 2.0 - res.w_plus);

  if (n <= 25) {
    // distribution of the doubled positive-rank sum over all 2^n signs
    long long t2 = static_cast<long long>(total2);
    std::vector<double> count(t2 + 1, 0.0);
    count[0] = 1.0;
    long long reach = 0;
    for (int k = 0; k < n; ++k) {
      for (long long s = reach; s >= 0; --s)
        if (count[s] > 0.0) count[s + rank2[k]] += count[s];
      reach += rank2[k];
    }
    long long w2 = static_cast<long long>(std::llround(
        std::min(w_plus2, total2 - w_plus2)));
    double tail_lo = 0.0, tail_hi = 0.0;
    for (long long s = 0; s <= w2; ++s) tail_lo += count[s];
    for (long long s = t2 - w2; s <= t2; ++s) tail_hi += count[s];
    res.p = std::min(1.0, (tail_lo + tail_hi) / std::pow(2.0, n));
    res.exact = true;
  } else {
    double w_plus = res.w_plus;
    double mu = total2 / 4.0;
    double var = static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0;
    // tie correction: sum (t^3 - t) / 48 over tie groups of |d|
    std::map<long long, int> groups;
    for (int k = 0; k < n; ++k) groups[rank2[k]]++;
    for (const auto& [_, t] : groups)
      var -= (static_cast<double>(t) * t * t - t) / 48.0;
    if (var <= 0.0)
      throw UndefinedMetric("zero variance in signed-rank statistic");
    double z = (std::abs(w_plus - mu) - 0.5) / std::sqrt(var);
    z = std::max(z, 0.0);
    res.p = std::erfc(z / std::sqrt(2.0));
    res.exact = false;
  }
  return res;
}

BootstrapSample bootstrap_resample(const GroupedPredictions& grouped,
                                   std::uint64_t seed) {
  if (grouped.num_groups() == 0)
    throw UndefinedMetric("bootstrap on empty grouping");
  BootstrapSample sample;
  sample.seed = seed;
  auto rng = make_rng(seed, 0);
  for (int k = 0; k < grouped.num_groups(); ++k) {
    std::vector<int> pos, neg;
    for (size_t i = 0; i < grouped.labels[k].size(); ++i)
      (grouped.labels[k][i] ? pos : neg).push_back(static_cast<int>(i));
    std::vector<int> idx;
    idx.reserve(grouped.labels[k].size());
    if (!pos.empty()) {
      std::uniform_int_distribution<size_t> pick(0, pos.size() - 1);
      for (size_t i = 0; i < pos.size(); ++i) idx.push_back(pos[pick(rng)]);
    }
    if (!neg.empty()) {
      std::uniform_int_distribution<size_t> pick(0, neg.size() - 1);
      for (size_t i = 0; i < neg.size(); ++i) idx.push_back(neg[pick(rng)]);
    }
    sample.indices.push_back(std::move(idx));
  }
  return sample;
}

GroupedPredictions apply_sample(const GroupedPredictions& grouped,
                                const BootstrapSample& sample) {
  GroupedPredictions out;
  out.scores.resize(grouped.num_groups());
  out.labels.resize(grouped.num_groups());
  for (int k = 0; k < grouped.num_groups(); ++k) {
    for (int i : sample.indices[k]) {
      out.scores[k].push_back(grouped.scores[k][i]);
      out.labels[k].push_back(grouped.labels[k][i]);
    }
  }
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw UndefinedMetric("adjusted Rand index needs two equal-length partitions");
  std::map<std::pair<int, int>, long long> cont;
  std::map<int, long long> ra, rb;
  for (size_t i = 0; i < a.size(); ++i) {
    cont[{a[i], b[i]}]++;
    ra[a[i]]++;
    rb[b[i]]++;
  }
  auto choose2 = [](long long m) {
    return static_cast<double>(m) * (m - 1) / 2.0;
  };
  double sum_cont = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, c] : cont) sum_cont += choose2(c);
  for (const auto& [_, c] : ra) sum_a += choose2(c);
  for (const auto& [_, c] : rb) sum_b += choose2(c);
  double total = choose2(static_cast<long long>(a.size()));
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (sum_cont - expected) / (max_index - expected);
}

std::string significance_tier(double p) {
  if (p < 1e-15) return "‡";           // double dagger
  if (p < 1e-5) return "†";            // dagger
  if (p < 1e-3) return "⋄";            // diamond
  if (p < 1e-2) return "⋆";            // star
  return "";
}

namespace {

struct Scope {
  std::string name;
  int cohort = -1;  // -1 macro, -2 micro
};

double scoped_metric(const GroupedPredictions& g, const Scope& scope, Metric m,
                     double target, const FixedThresholds* fixed) {
  if (fixed == nullptr || m == Metric::Auc) {
    if (scope.cohort >= 0)
      return metric_value(m, g.scores[scope.cohort], g.labels[scope.cohort],
                          target);
    if (scope.cohort == -1) return macro_metric(g, m, target);
    return micro_metric(g, m, target);
  }
  auto pick = [m](const PpvSpecificity& r) {
    return m == Metric::Ppv ? r.ppv : r.specificity;
  };
  if (scope.cohort >= 0)
    return pick(ppv_specificity(g.scores[scope.cohort], g.labels[scope.cohort],
                                fixed->per_cohort[scope.cohort]));
  if (scope.cohort == -1) {
    double sum = 0.0;
    for (int k = 0; k < g.num_groups(); ++k)
      sum += pick(ppv_specificity(g.scores[k], g.labels[k],
                                  fixed->per_cohort[k]));
    return sum / g.num_groups();
  }
  std::vector<double> s;
  std::vector<int> l;
  g.concat(s, l);
  return pick(ppv_specificity(s, l, fixed->pooled));
}

ComparisonTable compare_models_impl(const GroupedPredictions& preds_a,
                                    const GroupedPredictions& preds_b,
                                    int n_bootstrap, std::uint64_t seed,
                                    double target, bool parallel,
                                    const FixedThresholds* fixed_a,
                                    const FixedThresholds* fixed_b) {
  if (preds_a.num_groups() != preds_b.num_groups())
    throw UndefinedMetric("prediction sets cover different cohorts");
  for (int k = 0; k < preds_a.num_groups(); ++k)
    if (preds_a.labels[k] != preds_b.labels[k])
      throw UndefinedMetric("prediction sets cover different episodes");

  std::vector<Scope> scopes;
  for (int k = 0; k < preds_a.num_groups(); ++k)
    scopes.push_back({"cohort " + std::to_string(k), k});
  scopes.push_back({"macro", -1});
  scopes.push_back({"micro", -2});
  const std::vector<Metric> metrics = {Metric::Auc, Metric::Ppv,
                                       Metric::Specificity};

  ComparisonTable table;
  table.n_bootstrap = n_bootstrap;
  table.seed = seed;

  // paired bootstrap series: one resample, both models evaluated on it
  const size_t n_cells = scopes.size() * metrics.size();
  std::vector<std::vector<double>> series_a(n_cells), series_b(n_cells);
  for (auto& s : series_a) s.assign(n_bootstrap, std::numeric_limits<double>::quiet_NaN());
  for (auto& s : series_b) s.assign(n_bootstrap, std::numeric_limits<double>::quiet_NaN());

#pragma omp parallel for schedule(static) if (parallel)
  for (int b = 0; b < n_bootstrap; ++b) {
    auto sample = bootstrap_resample(preds_a, mix_seed(seed, b));
    auto ga = apply_sample(preds_a, sample);
    auto gb = apply_sample(preds_b, sample);
    for (size_t si = 0; si < scopes.size(); ++si)
      for (size_t mi = 0; mi < metrics.size(); ++mi) {
        size_t cell = si * metrics.size() + mi;
        try {
          series_a[cell][b] =
              scoped_metric(ga, scopes[si], metrics[mi], target, fixed_a);
          series_b[cell][b] =
              scoped_metric(gb, scopes[si], metrics[mi], target, fixed_b);
        } catch (const UndefinedMetric&) {
          // left as NaN; dropped from the series below
        }
      }
  }

  for (size_t si = 0; si < scopes.size(); ++si)
    for (size_t mi = 0; mi < metrics.size(); ++mi) {
      size_t cell = si * metrics.size() + mi;
      ComparisonCell c;
      c.scope = scopes[si].name;
      c.metric = metrics[mi];
      try {
        c.value_a =
            scoped_metric(preds_a, scopes[si], metrics[mi], target, fixed_a);
        c.value_b =
            scoped_metric(preds_b, scopes[si], metrics[mi], target, fixed_b);
      } catch (const UndefinedMetric&) {
        // e.g. a single-class cohort: no comparison possible in this cell
        c.value_a = c.value_b = std::numeric_limits<double>::quiet_NaN();
        c.degenerate = true;
        table.cells.push_back(std::move(c));
        continue;
      }
      std::vector<double> diffs;
      for (int b = 0; b < n_bootstrap; ++b) {
        double va = series_a[cell][b], vb = series_b[cell][b];
        if (std::isnan(va) || std::isnan(vb)) continue;
        c.series_a.push_back(va);
        c.series_b.push_back(vb);
        diffs.push_back(va - vb);
      }
      try {
        auto w = wilcoxon_signed_rank(diffs);
        c.p = w.p;
        c.tier = significance_tier(w.p);
        if (w.p < 0.01) {
          double mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) /
                             static_cast<double>(diffs.size());
          c.winner = mean_diff > 0 ? 1 : 2;
        }
      } catch (const UndefinedMetric&) {
        c.degenerate = true;  // reported as "no difference"
        c.p = 1.0;
      }
      table.cells.push_back(std::move(c));
    }
  return table;
}

}  // namespace

ComparisonTable compare_models(const GroupedPredictions& preds_a,
                               const GroupedPredictions& preds_b,
                               int n_bootstrap, std::uint64_t seed,
                               double sensitivity_target,
                               const FixedThresholds* fixed_a,
                               const FixedThresholds* fixed_b) {
  return compare_models_impl(preds_a, preds_b, n_bootstrap, seed,
                             sensitivity_target, true, fixed_a, fixed_b);
}

ComparisonTable compare_models_serial(const GroupedPredictions& preds_a,
                                      const GroupedPredictions& preds_b,
                                      int n_bootstrap, std::uint64_t seed,
                                      double sensitivity_target,
                                      const FixedThresholds* fixed_a,
                                      const FixedThresholds* fixed_b) {
  return compare_models_impl(preds_a, preds_b, n_bootstrap, seed,
                             sensitivity_target, false, fixed_a, fixed_b);
}

FixedThresholds derive_thresholds(const GroupedPredictions& preds,
                                  double sensitivity_target) {
  FixedThresholds f;
  for (int k = 0; k < preds.num_groups(); ++k)
    f.per_cohort.push_back(
        threshold_at_sensitivity(preds.scores[k], preds.labels[k],
                                 sensitivity_target));
  std::vector<double> s;
  std::vector<int> l;
  preds.concat(s, l);
  f.pooled = threshold_at_sensitivity(s, l, sensitivity_target);
  return f;
}

}  // namespace cohortmt
