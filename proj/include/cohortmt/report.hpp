#pragma once

#include <string>
#include <vector>

#include "cohortmt/evalstats.hpp"
#include "cohortmt/ingest.hpp"

namespace cohortmt {

struct CohortSummary {
  int size = 0;
  int positives = 0;
  double imbalance() const {
    return size ? static_cast<double>(positives) / size : 0.0;
  }
};

struct ReportContext {
  std::string title;
  std::string model_a = "Global";
  std::string model_b = "Multi-task";
  std::string config_digest;
  std::string threshold_mode = "test";
  int window_hours = 0;
  int gap_hours = 0;
  std::vector<CohortSummary> cohorts;
};

// Human-readable table: cohort rows x (AUC, PPV, specificity) columns for
// both models, winner starred with its significance tier.
std::string render_report_text(const ComparisonTable& table,
                               const ReportContext& ctx);

// Machine-readable variant including the raw bootstrap series.
std::string render_report_json(const ComparisonTable& table,
                               const ReportContext& ctx);

// Per-cohort mean de-bucketized z trajectory (bucket index as z proxy) for
// each selected feature; writes centroids.csv and one SVG per feature.
// Empty cohorts are skipped; features never observed are omitted.
void emit_centroid_plots(const TaskDataset& ds,
                         const std::vector<int>& cohort_of_episode, int k,
                         const std::vector<int>& features,
                         const std::string& out_dir);

}  // namespace cohortmt
