#include "cohortmt/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_map>

#include "cohortmt/common.hpp"

namespace cohortmt {

InclusionResult apply_inclusion(std::vector<RawEpisode> episodes) {
  InclusionResult result;
  // first stay per patient = lowest episode_id
  std::unordered_map<std::string, std::string> first_stay;
  for (const auto& ep : episodes) {
    auto [it, inserted] = first_stay.emplace(ep.patient_id(), ep.episode_id);
    if (!inserted && ep.episode_id < it->second) it->second = ep.episode_id;
  }
  for (auto& ep : episodes) {
    if (!(ep.age > 15.0)) {
      result.rejects.push_back({ep.episode_id, "age must be over 15"});
      continue;
    }
    if (first_stay.at(ep.patient_id()) != ep.episode_id) {
      result.rejects.push_back({ep.episode_id, "not the patient's first stay"});
      continue;
    }
    result.episodes.push_back(std::move(ep));
  }
  return result;
}

HourlyGrid bin_hourly(const std::vector<Measurement>& measurements,
                      int window_hours) {
  HourlyGrid grid;
  grid.hours = window_hours;
  grid.cells.assign(static_cast<size_t>(window_hours) * kNumFeatures,
                    std::nullopt);
  std::vector<double> sum(grid.cells.size(), 0.0);
  std::vector<int> count(grid.cells.size(), 0);
  for (const auto& m : measurements) {
    // nearest hour, ties away from zero; offsets are non-negative
    int hour = static_cast<int>(std::floor(m.hour_offset + 0.5));
    if (hour < 0 || hour >= window_hours) continue;
    size_t idx = static_cast<size_t>(hour) * kNumFeatures + m.feature;
    sum[idx] += m.value;
    count[idx] += 1;
  }
  for (size_t i = 0; i < grid.cells.size(); ++i)
    if (count[i] > 0) grid.cells[i] = sum[i] / count[i];
  return grid;
}

std::uint64_t FeatureStats::digest() const {
  std::string repr = sample_std ? "sample;" : "population;";
  char buf[96];
  for (int f = 0; f < kNumFeatures; ++f) {
    const auto& e = per_feature[f];
    std::snprintf(buf, sizeof(buf), "%d:%d:%.17g:%.17g:%d;", f, e.present,
                  e.mean, e.stddev, e.degenerate);
    repr += buf;
  }
  return fnv1a(repr);
}

FeatureStats compute_feature_stats(const std::vector<HourlyGrid>& grids,
                                   bool sample_std) {
  const int n = static_cast<int>(grids.size());
  // two-pass reduction; per-episode partials combined in index order so the
  // result is independent of the parallel schedule
  std::vector<std::array<double, kNumFeatures>> psum(n), psq(n);
  std::vector<std::array<std::int64_t, kNumFeatures>> pcount(n);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    psum[i].fill(0.0);
    pcount[i].fill(0);
    const auto& g = grids[i];
    for (int h = 0; h < g.hours; ++h)
      for (int f = 0; f < kNumFeatures; ++f)
        if (auto v = g.at(h, f)) {
          psum[i][f] += *v;
          pcount[i][f] += 1;
        }
  }
  std::array<double, kNumFeatures> mean{};
  std::array<std::int64_t, kNumFeatures> count{};
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < kNumFeatures; ++f) {
      mean[f] += psum[i][f];
      count[f] += pcount[i][f];
    }
  for (int f = 0; f < kNumFeatures; ++f)
    if (count[f] > 0) mean[f] /= static_cast<double>(count[f]);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    psq[i].fill(0.0);
    const auto& g = grids[i];
    for (int h = 0; h < g.hours; ++h)
      for (int f = 0; f < kNumFeatures; ++f)
        if (auto v = g.at(h, f)) {
          double d = *v - mean[f];
          psq[i][f] += d * d;
        }
  }
  FeatureStats stats;
  stats.sample_std = sample_std;
  stats.per_feature.resize(kNumFeatures);
  for (int f = 0; f < kNumFeatures; ++f) {
    auto& e = stats.per_feature[f];
    if (count[f] == 0) continue;
    e.present = true;
    e.mean = mean[f];
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += psq[i][f];
    double denom = sample_std ? static_cast<double>(count[f] - 1)
                              : static_cast<double>(count[f]);
    double var = denom > 0 ? ss / denom : 0.0;
    e.stddev = std::sqrt(std::max(var, 0.0));
    e.degenerate = e.stddev == 0.0;
  }
  return stats;
}

int BucketSpec::bucket_of(double z) const {
  double r = std::round(z);  // half away from zero
  int b = static_cast<int>(std::clamp(r, static_cast<double>(zmin),
                                      static_cast<double>(zmax)));
  return b - zmin;
}

std::vector<double> StaticEncoder::encode(const RawEpisode& ep) const {
  std::vector<double> out(dim(), 0.0);
  int offset = 0;
  for (size_t i = 0; i < genders.size(); ++i)
    if (genders[i] == ep.gender) out[offset + i] = 1.0;
  offset += static_cast<int>(genders.size());
  int q = 0;
  while (q < 3 && ep.age > age_cuts[q]) ++q;
  out[offset + q] = 1.0;
  offset += 4;
  bool matched = false;
  for (size_t i = 0; i < ethnicities.size(); ++i)
    if (ethnicities[i] == ep.ethnicity) {
      out[offset + i] = 1.0;
      matched = true;
    }
  if (!matched) out[offset + ethnicities.size()] = 1.0;  // "other"
  return out;
}

namespace {

double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

StaticEncoder fit_static_encoder(const std::vector<RawEpisode>& train_episodes,
                                 int ethnicity_top_k) {
  StaticEncoder enc;
  std::map<std::string, int> gender_counts, eth_counts;
  std::vector<double> ages;
  ages.reserve(train_episodes.size());
  for (const auto& ep : train_episodes) {
    gender_counts[ep.gender]++;
    eth_counts[ep.ethnicity]++;
    ages.push_back(ep.age);
  }
  for (const auto& [g, _] : gender_counts) enc.genders.push_back(g);
  std::sort(ages.begin(), ages.end());
  enc.age_cuts = {percentile(ages, 0.25), percentile(ages, 0.50),
                  percentile(ages, 0.75)};
  // top-k by count, ties broken lexicographically (map iteration order)
  std::vector<std::pair<std::string, int>> eths(eth_counts.begin(),
                                                eth_counts.end());
  std::stable_sort(eths.begin(), eths.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (size_t i = 0; i < eths.size() && i < static_cast<size_t>(ethnicity_top_k);
       ++i)
    enc.ethnicities.push_back(eths[i].first);
  std::sort(enc.ethnicities.begin(), enc.ethnicities.end());
  return enc;
}

Eigen::MatrixXd BinaryTensor::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(hours, dim);
  for (auto idx : ones) m(idx / dim, idx % dim) = 1.0;
  return m;
}

bool BinaryTensor::get(int hour, int col) const {
  std::uint32_t flat = static_cast<std::uint32_t>(hour) * dim + col;
  return std::binary_search(ones.begin(), ones.end(), flat);
}

BinaryTensor zscore_discretize(const HourlyGrid& grid,
                               const FeatureStats& stats,
                               const TensorLayout& layout,
                               const std::vector<double>& statics) {
  if (static_cast<int>(statics.size()) != layout.static_dim)
    throw DataError("static vector size does not match layout");
  BinaryTensor t;
  t.hours = grid.hours;
  t.dim = layout.dim();
  for (int h = 0; h < grid.hours; ++h) {
    for (int f = 0; f < kNumFeatures; ++f) {
      auto v = grid.at(h, f);
      if (!v) continue;
      const auto& e = stats.per_feature[f];
      if (!e.present) continue;  // never observed in training: all zeros
      double z = e.degenerate ? 0.0 : (*v - e.mean) / e.stddev;
      int col = layout.column(f, layout.buckets.bucket_of(z));
      t.ones.push_back(static_cast<std::uint32_t>(h) * t.dim + col);
    }
    for (int j = 0; j < layout.static_dim; ++j)
      if (statics[j] != 0.0)
        t.ones.push_back(static_cast<std::uint32_t>(h) * t.dim +
                         layout.static_column(j));
  }
  std::sort(t.ones.begin(), t.ones.end());
  return t;
}

std::vector<int> TaskDataset::indices_of(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

TaskDataset build_task_dataset(const std::vector<RawEpisode>& episodes,
                               const DatasetConfig& config) {
  const bool supported =
      (config.window_hours == 24 && config.gap_hours == 12) ||
      (config.window_hours == 48 && config.gap_hours == 24);
  if (!supported)
    throw ConfigError("unsupported window/gap configuration (24/12 or 48/24)");

  const double horizon = config.window_hours + config.gap_hours;
  std::vector<const RawEpisode*> kept;
  for (const auto& ep : episodes) {
    double event = ep.outcome_time ? std::min(*ep.outcome_time, ep.discharge_time)
                                   : ep.discharge_time;
    if (event < horizon) continue;
    kept.push_back(&ep);
  }
  int positives = 0;
  for (auto* ep : kept) positives += ep->label;
  if (positives < config.min_positives)
    throw DataError("only " + std::to_string(positives) +
                    " positive episodes after gap filtering (minimum " +
                    std::to_string(config.min_positives) + ")");

  // deterministic stratified split: order by id within stratum, shuffle
  std::vector<Split> split_of(kept.size(), Split::Train);
  for (int label = 0; label <= 1; ++label) {
    std::vector<int> idx;
    for (size_t i = 0; i < kept.size(); ++i)
      if (kept[i]->label == label) idx.push_back(static_cast<int>(i));
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return kept[a]->episode_id < kept[b]->episode_id;
    });
    auto rng = make_rng(config.seed, 100 + label);
    std::shuffle(idx.begin(), idx.end(), rng);
    size_t n_test = static_cast<size_t>(
        std::llround(config.test_frac * static_cast<double>(idx.size())));
    size_t n_val = (idx.size() - n_test) / config.val_denominator;
    for (size_t i = 0; i < idx.size(); ++i) {
      if (i < n_test)
        split_of[idx[i]] = Split::Test;
      else if (i < n_test + n_val)
        split_of[idx[i]] = Split::Val;
    }
  }

  TaskDataset ds;
  ds.window_hours = config.window_hours;
  ds.gap_hours = config.gap_hours;
  ds.seed = config.seed;
  ds.episode_ids.reserve(kept.size());
  for (auto* ep : kept) ds.episode_ids.push_back(ep->episode_id);
  for (auto* ep : kept) ds.labels.push_back(ep->label);
  ds.splits = split_of;

  const int n = static_cast<int>(kept.size());
  std::vector<HourlyGrid> grids(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    grids[i] = bin_hourly(kept[i]->measurements, config.window_hours);

  std::vector<HourlyGrid> train_grids;
  std::vector<RawEpisode> train_eps;
  for (int i = 0; i < n; ++i)
    if (split_of[i] == Split::Train) {
      train_grids.push_back(grids[i]);
      train_eps.push_back(*kept[i]);
    }
  ds.stats = compute_feature_stats(train_grids, config.sample_std);
  ds.statics = fit_static_encoder(train_eps, config.ethnicity_top_k);
  ds.layout.buckets = config.buckets;
  ds.layout.static_dim = ds.statics.dim();

  ds.tensors.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    auto statics = ds.statics.encode(*kept[i]);
    ds.tensors[i] = zscore_discretize(grids[i], ds.stats, ds.layout, statics);
  }
  return ds;
}

}  // namespace cohortmt
