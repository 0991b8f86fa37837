#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cohortmt/common.hpp"
#include "cohortmt/dataset.hpp"
#include "cohortmt/ingest.hpp"
#include "cohortmt/synth.hpp"

using namespace cohortmt;

namespace {

RawEpisode make_ep(const std::string& id, double age, int label = 0,
                   double discharge = 200.0) {
  RawEpisode ep;
  ep.episode_id = id;
  ep.age = age;
  ep.gender = "F";
  ep.ethnicity = "a";
  ep.discharge_time = discharge;
  ep.label = label;
  if (label) ep.outcome_time = discharge;
  return ep;
}

}  // namespace

TEST_CASE("inclusion keeps first stays of adults only") {
  std::vector<RawEpisode> eps = {
      make_ep("p1-2", 40), make_ep("p1-1", 40),  // same patient, two stays
      make_ep("p2-1", 15),                       // strictly over 15 required
      make_ep("p3-1", 16), make_ep("p4-1", 15.5),
  };
  auto res = apply_inclusion(std::move(eps));
  std::vector<std::string> kept;
  for (const auto& e : res.episodes) kept.push_back(e.episode_id);
  CHECK(kept == std::vector<std::string>{"p1-1", "p3-1", "p4-1"});
  CHECK(res.rejects.size() == 2);
}

TEST_CASE("hourly binning rounds to nearest hour, ties away from zero") {
  int hr = *feature_index("heart_rate");
  std::vector<Measurement> ms = {
      {0.4, hr, 60.0},   // -> hour 0
      {0.5, hr, 80.0},   // tie -> hour 1
      {1.49, hr, 100.0}, // -> hour 1
      {23.6, hr, 70.0},  // -> hour 24, outside a 24h window: dropped
      {5.0, hr, 90.0},
  };
  auto grid = bin_hourly(ms, 24);
  CHECK(grid.at(0, hr) == 60.0);
  CHECK(grid.at(1, hr) == 90.0);  // mean of 80 and 100
  CHECK(grid.at(5, hr) == 90.0);
  CHECK_FALSE(grid.at(23, hr).has_value());
  CHECK_FALSE(grid.at(2, hr).has_value());
}

TEST_CASE("feature stats against a direct two-pass oracle") {
  int hr = *feature_index("heart_rate");
  int gl = *feature_index("glucose");
  std::vector<HourlyGrid> grids(2);
  for (auto& g : grids) {
    g.hours = 4;
    g.cells.assign(4 * kNumFeatures, std::nullopt);
  }
  std::vector<double> vals = {60, 70, 80, 90, 100};
  grids[0].at(0, hr) = 60;
  grids[0].at(1, hr) = 70;
  grids[0].at(2, hr) = 80;
  grids[1].at(0, hr) = 90;
  grids[1].at(3, hr) = 100;
  grids[0].at(0, gl) = 5.0;  // single constant observation -> degenerate
  grids[1].at(2, gl) = 5.0;

  auto stats = compute_feature_stats(grids, /*sample_std=*/false);
  double mean = 80.0;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= vals.size();
  CHECK(stats.per_feature[hr].present);
  CHECK(stats.per_feature[hr].mean == doctest::Approx(mean).epsilon(1e-15));
  CHECK(stats.per_feature[hr].stddev ==
        doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK_FALSE(stats.per_feature[hr].degenerate);
  CHECK(stats.per_feature[gl].degenerate);
  CHECK_FALSE(stats.per_feature[*feature_index("lactate")].present);

  auto sample = compute_feature_stats(grids, /*sample_std=*/true);
  CHECK(sample.per_feature[hr].stddev ==
        doctest::Approx(std::sqrt(var * 5.0 / 4.0)).epsilon(1e-12));
  CHECK(stats.digest() != sample.digest());
}

TEST_CASE("z buckets: round half away from zero, clipped") {
  BucketSpec b;  // [-4, 4], 9 buckets; bucket_of returns the column offset
  CHECK(b.bucket_of(0.0) == 4);
  CHECK(b.bucket_of(0.49) == 4);
  CHECK(b.bucket_of(0.5) == 5);
  CHECK(b.bucket_of(-0.5) == 3);
  CHECK(b.bucket_of(-7.0) == 0);
  CHECK(b.bucket_of(12.0) == 8);
  CHECK(b.count() == 9);
}

TEST_CASE("discretization sets exactly one bucket per observed cell") {
  int hr = *feature_index("heart_rate");
  HourlyGrid g;
  g.hours = 3;
  g.cells.assign(3 * kNumFeatures, std::nullopt);
  g.at(0, hr) = 95.0;
  g.at(2, hr) = 80.0;

  FeatureStats stats;
  stats.per_feature.assign(kNumFeatures, {});
  stats.per_feature[hr] = {true, 80.0, 10.0, false};
  TensorLayout layout;
  layout.static_dim = 2;
  auto t = zscore_discretize(g, stats, layout, {1.0, 0.0});

  // z = 1.5 -> bucket 2 above center -> offset 6; z = 0 -> offset 4
  CHECK(t.get(0, layout.column(hr, 6)));
  CHECK(t.get(2, layout.column(hr, 4)));
  CHECK(t.get(0, layout.static_column(0)));
  CHECK_FALSE(t.get(0, layout.static_column(1)));
  CHECK(t.get(1, layout.static_column(0)));  // statics replicate across hours
  // unobserved cells contribute nothing
  int hr_cols = 0;
  for (int h = 0; h < 3; ++h)
    for (int bkt = 0; bkt < 9; ++bkt)
      if (t.get(h, layout.column(hr, bkt))) ++hr_cols;
  CHECK(hr_cols == 2);
}

TEST_CASE("degenerate features pin z to the center bucket") {
  int gl = *feature_index("glucose");
  HourlyGrid g;
  g.hours = 1;
  g.cells.assign(kNumFeatures, std::nullopt);
  g.at(0, gl) = 123.0;
  FeatureStats stats;
  stats.per_feature.assign(kNumFeatures, {});
  stats.per_feature[gl] = {true, 5.0, 0.0, true};
  TensorLayout layout;
  auto t = zscore_discretize(g, stats, layout, {});
  CHECK(t.get(0, layout.column(gl, 4)));
}

TEST_CASE("static encoder vocabularies from training data") {
  std::vector<RawEpisode> eps;
  const char* eth[] = {"w", "w", "w", "b", "b", "h", "x", "y"};
  for (int i = 0; i < 8; ++i) {
    auto e = make_ep("p" + std::to_string(i) + "-1", 20.0 + i * 5);
    e.ethnicity = eth[i];
    e.gender = i % 2 ? "M" : "F";
    eps.push_back(e);
  }
  auto enc = fit_static_encoder(eps, /*ethnicity_top_k=*/2);
  CHECK(enc.genders == std::vector<std::string>{"F", "M"});
  CHECK(enc.ethnicities == std::vector<std::string>{"b", "w"});
  CHECK(enc.dim() == 2 + 4 + 3);  // genders + age quartiles + topk + other
  // ages 20..55 step 5; type-7 quartiles: 28.75, 37.5, 46.25
  CHECK(enc.age_cuts[0] == doctest::Approx(28.75));
  CHECK(enc.age_cuts[1] == doctest::Approx(37.5));
  CHECK(enc.age_cuts[2] == doctest::Approx(46.25));

  auto e = make_ep("q1-1", 30.0);
  e.ethnicity = "z";  // unseen -> "other" slot
  auto v = enc.encode(e);
  CHECK(v[0] == 1.0);                 // gender F
  CHECK(v[2 + 1] == 1.0);             // second age quartile
  CHECK(v[enc.dim() - 1] == 1.0);     // other
}

TEST_CASE("dataset build: gap filter, stratified split, determinism") {
  auto spec = default_population_spec(600, 1.0, 3);
  auto pop = generate_population(spec);
  DatasetConfig cfg;
  cfg.seed = 9;
  cfg.min_positives = 2;
  auto ds = build_task_dataset(pop.episodes, cfg);

  auto train = ds.indices_of(Split::Train);
  auto val = ds.indices_of(Split::Val);
  auto test = ds.indices_of(Split::Test);
  size_t n = ds.size();
  CHECK(train.size() + val.size() + test.size() == n);
  CHECK(test.size() == static_cast<size_t>(std::llround(0.2 * n)));
  // 7:1 train:val on the remainder (split per label, so +/-1 per class)
  auto expected_val = (n - test.size()) / 8;
  CHECK(val.size() >= expected_val - 1);
  CHECK(val.size() <= expected_val + 1);

  // stratification: test prevalence close to overall
  auto prev = [&](const std::vector<int>& idx) {
    double p = 0;
    for (int i : idx) p += ds.labels[i];
    return p / idx.size();
  };
  double overall = prev(train) * train.size() + prev(val) * val.size() +
                   prev(test) * test.size();
  overall /= n;
  CHECK(std::fabs(prev(test) - overall) < 0.02);

  // same seed, same split; different seed, different split
  auto ds2 = build_task_dataset(pop.episodes, cfg);
  CHECK(ds2.splits == ds.splits);
  cfg.seed = 10;
  auto ds3 = build_task_dataset(pop.episodes, cfg);
  CHECK(ds3.splits != ds.splits);

  // gap filter: every retained episode has its event past window + gap
  for (const auto& id : ds.episode_ids) {
    for (const auto& ep : pop.episodes) {
      if (ep.episode_id != id) continue;
      double event = ep.outcome_time ? std::min(*ep.outcome_time,
                                                ep.discharge_time)
                                     : ep.discharge_time;
      CHECK(event >= cfg.window_hours + cfg.gap_hours);
    }
  }
}

TEST_CASE("unsupported window/gap pairs are rejected") {
  auto spec = default_population_spec(50, 1.0, 3);
  auto pop = generate_population(spec);
  DatasetConfig cfg;
  cfg.window_hours = 24;
  cfg.gap_hours = 6;
  CHECK_THROWS_AS(build_task_dataset(pop.episodes, cfg), ConfigError);
}

TEST_CASE("dataset round-trips through disk") {
  auto spec = default_population_spec(200, 1.0, 5);
  auto pop = generate_population(spec);
  DatasetConfig cfg;
  cfg.seed = 4;
  cfg.min_positives = 1;
  auto ds = build_task_dataset(pop.episodes, cfg);

  std::string dir = std::filesystem::temp_directory_path() / "cohortmt_ds_test";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  auto back = load_dataset(dir);
  CHECK(back.episode_ids == ds.episode_ids);
  CHECK(back.labels == ds.labels);
  CHECK(back.splits == ds.splits);
  REQUIRE(back.tensors.size() == ds.tensors.size());
  for (size_t i = 0; i < ds.tensors.size(); ++i)
    CHECK(back.tensors[i].ones == ds.tensors[i].ones);
  CHECK(back.stats.digest() == ds.stats.digest());
  std::filesystem::remove_all(dir);
}
