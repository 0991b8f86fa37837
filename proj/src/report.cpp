#include "cohortmt/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "cohortmt/common.hpp"
#include "cohortmt/registry.hpp"

namespace cohortmt {

using nlohmann::json;

namespace {

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::Auc:
      return "AUC";
    case Metric::Ppv:
      return "PPV";
    case Metric::Specificity:
      return "Specificity";
  }
  return "?";
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// winner value starred with the tier symbol, e.g. "*0.823*†"
std::pair<std::string, std::string> cell_pair(const ComparisonCell& c) {
  std::string a = fmt3(c.value_a), b = fmt3(c.value_b);
  if (c.winner == 1) a = "*" + a + "*" + c.tier;
  if (c.winner == 2) b = "*" + b + "*" + c.tier;
  return {a, b};
}

struct SeriesSummary {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

SeriesSummary summarize(const std::vector<double>& series) {
  SeriesSummary s;
  if (series.empty()) return s;
  s.mean = std::accumulate(series.begin(), series.end(), 0.0) /
           static_cast<double>(series.size());
  auto sorted = series;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double p) {
    double h = p * (static_cast<double>(sorted.size()) - 1);
    size_t lo = static_cast<size_t>(h);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
  };
  s.lo = pct(0.025);
  s.hi = pct(0.975);
  return s;
}

}  // namespace

std::string render_report_text(const ComparisonTable& table,
                               const ReportContext& ctx) {
  std::ostringstream out;
  out << ctx.title << "\n";
  out << "window " << ctx.window_hours << "h, gap " << ctx.gap_hours
      << "h; thresholds on " << ctx.threshold_mode << " predictions; "
      << table.n_bootstrap << " bootstrap resamples; config "
      << ctx.config_digest << "\n\n";

  out << "Cohort sizes:\n";
  for (size_t k = 0; k < ctx.cohorts.size(); ++k) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  cohort %zu: N=%d n=%d imbalance=%.4f\n",
                  k, ctx.cohorts[k].size, ctx.cohorts[k].positives,
                  ctx.cohorts[k].imbalance());
    out << buf;
  }
  out << "\n";

  // scope rows in table order: cohorts, then macro, micro
  std::vector<std::string> scopes;
  for (const auto& c : table.cells) {
    if (std::find(scopes.begin(), scopes.end(), c.scope) == scopes.end())
      scopes.push_back(c.scope);
  }
  const std::vector<Metric> metrics = {Metric::Auc, Metric::Ppv,
                                       Metric::Specificity};
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s", "Cohort");
  out << buf;
  for (auto m : metrics) {
    out << metric_name(m) << " " << ctx.model_a << " / " << ctx.model_b
        << "    ";
  }
  out << "\n";
  for (const auto& scope : scopes) {
    std::snprintf(buf, sizeof(buf), "%-10s", scope.c_str());
    out << buf;
    for (auto m : metrics) {
      for (const auto& c : table.cells) {
        if (c.scope != scope || c.metric != m) continue;
        if (c.degenerate) {
          out << "  no difference        ";
        } else {
          auto [a, b] = cell_pair(c);
          std::snprintf(buf, sizeof(buf), "  %-10s/ %-12s", a.c_str(),
                        b.c_str());
          out << buf;
        }
      }
    }
    out << "\n";
  }
  out << "\nsignificance: ⋆ 0.01>p>0.001, ⋄ 0.001>p>1e-5, † 1e-5>p>1e-15, ‡ "
         "p<1e-15; winner starred when p < 0.01\n";
  return out.str();
}

std::string render_report_json(const ComparisonTable& table,
                               const ReportContext& ctx) {
  json doc;
  doc["title"] = ctx.title;
  doc["window_hours"] = ctx.window_hours;
  doc["gap_hours"] = ctx.gap_hours;
  doc["config_digest"] = ctx.config_digest;
  doc["threshold_mode"] = ctx.threshold_mode;
  doc["n_bootstrap"] = table.n_bootstrap;
  doc["models"] = {ctx.model_a, ctx.model_b};
  doc["cohorts"] = json::array();
  for (const auto& c : ctx.cohorts)
    doc["cohorts"].push_back({{"size", c.size},
                              {"positives", c.positives},
                              {"imbalance", c.imbalance()}});
  doc["cells"] = json::array();
  for (const auto& c : table.cells) {
    auto sa = summarize(c.series_a);
    auto sb = summarize(c.series_b);
    doc["cells"].push_back(
        {{"scope", c.scope},
         {"metric", metric_name(c.metric)},
         {"value_a", c.value_a},
         {"value_b", c.value_b},
         {"p", c.p},
         {"tier", c.tier},
         {"winner", c.winner},
         {"degenerate", c.degenerate},
         {"bootstrap_a",
          {{"mean", sa.mean}, {"p2.5", sa.lo}, {"p97.5", sa.hi}}},
         {"bootstrap_b",
          {{"mean", sb.mean}, {"p2.5", sb.lo}, {"p97.5", sb.hi}}},
         {"series_a", c.series_a},
         {"series_b", c.series_b}});
  }
  return doc.dump(2) + "\n";
}

void emit_centroid_plots(const TaskDataset& ds,
                         const std::vector<int>& cohort_of_episode, int k,
                         const std::vector<int>& features,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const int t_hours = ds.tensors.empty() ? 0 : ds.tensors[0].hours;
  const int n_buckets = ds.layout.buckets.count();

  std::vector<int> cohort_count(k, 0);
  for (int c : cohort_of_episode)
    if (c >= 0 && c < k) cohort_count[c]++;
  for (int c = 0; c < k; ++c)
    if (cohort_count[c] == 0)
      std::cerr << "warning: cohort " << c << " is empty; skipped in plots\n";

  // trajectories[f][c][h] -> (sum of z proxies, count)
  std::ofstream csv(out_dir + "/centroids.csv");
  csv << "feature,cohort,hour,mean_z,observations\n";

  for (int f : features) {
    std::vector<std::vector<double>> sum(k, std::vector<double>(t_hours, 0.0));
    std::vector<std::vector<long>> cnt(k, std::vector<long>(t_hours, 0));
    bool any = false;
    for (size_t i = 0; i < ds.tensors.size(); ++i) {
      int c = cohort_of_episode[i];
      if (c < 0 || c >= k) continue;
      const auto& t = ds.tensors[i];
      for (auto idx : t.ones) {
        int h = static_cast<int>(idx / t.dim);
        int col = static_cast<int>(idx % t.dim);
        if (col < f * n_buckets || col >= (f + 1) * n_buckets) continue;
        int bucket = col - f * n_buckets;
        sum[c][h] += bucket + ds.layout.buckets.zmin;
        cnt[c][h] += 1;
        any = true;
      }
    }
    if (!any) {
      std::cerr << "warning: feature " << kFeatureNames[f]
                << " never observed; trajectory omitted\n";
      continue;
    }
    for (int c = 0; c < k; ++c) {
      if (cohort_count[c] == 0) continue;
      for (int h = 0; h < t_hours; ++h) {
        if (cnt[c][h] == 0) continue;
        csv << kFeatureNames[f] << ',' << c << ',' << h << ','
            << sum[c][h] / cnt[c][h] << ',' << cnt[c][h] << '\n';
      }
    }

    // minimal SVG line plot, one polyline per cohort
    const int w = 640, hgt = 360, margin = 44;
    double zmin = ds.layout.buckets.zmin, zmax = ds.layout.buckets.zmax;
    std::ofstream svg(out_dir + "/" + std::string(kFeatureNames[f]) + ".svg");
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w
        << "' height='" << hgt << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << w / 2 << "' y='18' text-anchor='middle'>"
        << kFeatureNames[f] << " (mean z by hour)</text>\n";
    double y0 = hgt - margin - (0.0 - zmin) / (zmax - zmin) * (hgt - 2 * margin);
    svg << "<line x1='" << margin << "' y1='" << y0 << "' x2='" << w - margin
        << "' y2='" << y0 << "' stroke='#ccc'/>\n";
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b"};
    for (int c = 0; c < k; ++c) {
      if (cohort_count[c] == 0) continue;
      std::ostringstream pts;
      for (int h = 0; h < t_hours; ++h) {
        if (cnt[c][h] == 0) continue;
        double z = sum[c][h] / cnt[c][h];
        double x = margin + static_cast<double>(h) /
                                std::max(1, t_hours - 1) * (w - 2 * margin);
        double y = hgt - margin -
                   (z - zmin) / (zmax - zmin) * (hgt - 2 * margin);
        pts << x << ',' << y << ' ';
      }
      svg << "<polyline fill='none' stroke='" << colors[c % 6]
          << "' stroke-width='2' points='" << pts.str() << "'/>\n";
      svg << "<text x='" << w - margin + 2 << "' y='"
          << margin + 14 * c + 10 << "' fill='" << colors[c % 6]
          << "' font-size='11'>c" << c << "</text>\n";
    }
    svg << "</svg>\n";
  }
}

}  // namespace cohortmt
