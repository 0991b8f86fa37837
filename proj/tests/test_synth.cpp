#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "cohortmt/common.hpp"
#include "cohortmt/registry.hpp"
#include "cohortmt/synth.hpp"

using namespace cohortmt;

TEST_CASE("population generation is deterministic and sized as specified") {
  auto spec = default_population_spec(900, 1.0, 7);
  auto a = generate_population(spec);
  auto b = generate_population(spec);
  CHECK(a.episodes.size() == 900);
  CHECK(a.truth.size() == 900);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].episode_id == b.episodes[i].episode_id);
    CHECK(a.episodes[i].label == b.episodes[i].label);
    CHECK(a.episodes[i].measurements.size() == b.episodes[i].measurements.size());
  }
}

TEST_CASE("prevalence calibration lands near the cohort targets") {
  auto spec = default_population_spec(6000, 1.0, 11);
  auto pop = generate_population(spec);
  std::vector<int> pos(spec.cohorts.size(), 0), tot(spec.cohorts.size(), 0);
  for (size_t i = 0; i < pop.episodes.size(); ++i) {
    int c = pop.truth[i].cohort_id;
    tot[c]++;
    pos[c] += pop.episodes[i].label;
  }
  for (size_t c = 0; c < spec.cohorts.size(); ++c) {
    double prev = static_cast<double>(pos[c]) / tot[c];
    double target = spec.cohorts[c].prevalence;
    // binomial noise at these sizes: allow 3 sigma
    double sigma = std::sqrt(target * (1 - target) / tot[c]);
    CHECK(std::fabs(prev - target) < 3 * sigma + 1e-9);
  }
}

TEST_CASE("episodes respect event timing and structural invariants") {
  auto spec = default_population_spec(500, 1.0, 13);
  auto pop = generate_population(spec);
  std::set<std::string> ids;
  for (const auto& ep : pop.episodes) {
    CHECK(ids.insert(ep.episode_id).second);  // unique ids
    CHECK(ep.age > 15.0);
    double event = ep.outcome_time ? std::min(*ep.outcome_time, ep.discharge_time)
                                   : ep.discharge_time;
    CHECK(event >= spec.min_event_hour);
    CHECK(event <= spec.max_event_hour);
    if (ep.label == 1) CHECK(ep.outcome_time.has_value());
    for (const auto& m : ep.measurements) {
      CHECK(m.hour_offset >= 0.0);
      CHECK(m.feature >= 0);
      CHECK(m.feature < kNumFeatures);
    }
  }
}

TEST_CASE("the truth sidecar round-trips and scores perfect recovery") {
  auto spec = default_population_spec(300, 1.0, 17);
  auto pop = generate_population(spec);
  std::string path =
      std::filesystem::temp_directory_path() / "cohortmt_truth_test.csv";
  save_truth_sidecar(pop.truth, path);
  auto truth = load_truth_sidecar(path);
  CHECK(truth.size() == pop.truth.size());

  std::map<std::string, int> perfect, permuted;
  for (const auto& t : pop.truth) {
    perfect[t.episode_id] = t.cohort_id;
    permuted[t.episode_id] = (t.cohort_id + 1) % 3;  // relabeling is free
  }
  CHECK(evaluate_recovery(perfect, truth) == doctest::Approx(1.0));
  CHECK(evaluate_recovery(permuted, truth) == doctest::Approx(1.0));
  std::filesystem::remove(path);
}

TEST_CASE("bad population specs are rejected") {
  auto spec = default_population_spec(100, 1.0, 1);
  spec.cohorts[0].prevalence = 0.0;
  CHECK_THROWS_AS(generate_population(spec), ConfigError);
  spec = default_population_spec(100, 1.0, 1);
  spec.cohorts.clear();
  CHECK_THROWS_AS(generate_population(spec), ConfigError);
}
