#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cohortmt/episode.hpp"
#include "cohortmt/registry.hpp"

namespace cohortmt {

struct InclusionResult {
  std::vector<RawEpisode> episodes;
  std::vector<RecordDiagnostic> rejects;
};

// Keeps first stays (lowest episode_id per patient) of patients over 15.
InclusionResult apply_inclusion(std::vector<RawEpisode> episodes);

// Hourly grid of per-feature means; cells with no measurement are absent.
struct HourlyGrid {
  int hours = 0;
  std::vector<std::optional<double>> cells;  // hours * kNumFeatures, row-major

  std::optional<double>& at(int hour, int feature) {
    return cells[static_cast<size_t>(hour) * kNumFeatures + feature];
  }
  const std::optional<double>& at(int hour, int feature) const {
    return cells[static_cast<size_t>(hour) * kNumFeatures + feature];
  }
};

// Nearest-hour rounding (ties away from zero) then per-hour averaging.
// Measurements rounding outside [0, window_hours) are dropped.
HourlyGrid bin_hourly(const std::vector<Measurement>& measurements,
                      int window_hours);

struct FeatureStats {
  struct Entry {
    bool present = false;  // at least one training observation
    double mean = 0.0;
    double stddev = 0.0;
    bool degenerate = false;  // zero variance
  };
  std::vector<Entry> per_feature;  // size kNumFeatures
  bool sample_std = false;

  std::uint64_t digest() const;
};

// Mean/std per feature over all observed (episode, hour) cells of the
// training grids. Population std by default.
FeatureStats compute_feature_stats(const std::vector<HourlyGrid>& grids,
                                   bool sample_std = false);

struct BucketSpec {
  int zmin = -4;
  int zmax = 4;
  int count() const { return zmax - zmin + 1; }
  // round(z) half away from zero, clipped to [zmin, zmax]
  int bucket_of(double z) const;
};

// One-hot encoding of static attributes, vocabularies fit on training
// episodes: gender vocab, age quartiles, top-k ethnicities + "other".
struct StaticEncoder {
  std::vector<std::string> genders;
  std::vector<double> age_cuts;  // 3 quartile cut points
  std::vector<std::string> ethnicities;  // top-k; anything else -> "other"

  int dim() const {
    return static_cast<int>(genders.size()) + 4 +
           static_cast<int>(ethnicities.size()) + 1;
  }
  std::vector<double> encode(const RawEpisode& ep) const;
};

StaticEncoder fit_static_encoder(const std::vector<RawEpisode>& train_episodes,
                                 int ethnicity_top_k = 5);

struct TensorLayout {
  BucketSpec buckets;
  int static_dim = 0;
  int dim() const { return kNumFeatures * buckets.count() + static_dim; }
  int column(int feature, int bucket) const {
    return feature * buckets.count() + bucket;
  }
  int static_column(int j) const { return kNumFeatures * buckets.count() + j; }
};

// Sparse binary T x D tensor; `ones` holds sorted flat indices h*D + col.
struct BinaryTensor {
  int hours = 0;
  int dim = 0;
  std::vector<std::uint32_t> ones;

  Eigen::MatrixXd to_dense() const;  // hours x dim
  bool get(int hour, int col) const;
};

BinaryTensor zscore_discretize(const HourlyGrid& grid,
                               const FeatureStats& stats,
                               const TensorLayout& layout,
                               const std::vector<double>& statics);

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct TaskDataset {
  int window_hours = 0;
  int gap_hours = 0;
  std::uint64_t seed = 0;
  TensorLayout layout;
  FeatureStats stats;
  StaticEncoder statics;
  std::vector<std::string> episode_ids;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<BinaryTensor> tensors;

  std::vector<int> indices_of(Split s) const;
  size_t size() const { return episode_ids.size(); }
};

struct DatasetConfig {
  int window_hours = 24;
  int gap_hours = 12;
  double test_frac = 0.2;
  int val_denominator = 8;  // val = 1/8 of the non-test portion (7:1)
  int min_positives = 8;
  int ethnicity_top_k = 5;
  bool sample_std = false;
  BucketSpec buckets;
  std::uint64_t seed = 1;
};

// Gap-filters, splits (stratified on label, deterministic given seed),
// fits stats and static vocabularies on the train split only, and
// discretizes every episode.
TaskDataset build_task_dataset(const std::vector<RawEpisode>& episodes,
                               const DatasetConfig& config);

}  // namespace cohortmt
