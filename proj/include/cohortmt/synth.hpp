#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cohortmt/episode.hpp"

namespace cohortmt {

// Piecewise-linear latent trajectory for one feature: per-episode level and
// slope drawn around the cohort's, observed through per-hour Bernoulli
// sampling with Gaussian measurement noise.
struct TrajectorySpec {
  double level = 0.0;
  double slope = 0.0;
  double level_sd = 0.5;
  double slope_sd = 1.0;
  double noise = 0.3;
};

struct CohortSpec {
  int size = 0;
  double prevalence = 0.1;
  std::map<int, TrajectorySpec> trajectories;  // feature index -> trajectory
  // logistic outcome over standardized (level, slope) of designated features
  std::vector<int> outcome_features;
  std::vector<double> level_weights;
  std::vector<double> slope_weights;
  double sampling_rate = 0.7;     // per-feature per-hour observation prob
  double dropout_after_24 = 0.5;  // rate multiplier from hour 24 on
  // demographics: age ~ N(age_mean, age_sd) clamped to [16, 95]
  double age_mean = 55.0;
  double age_sd = 20.0;
  double p_female = 0.5;
};

struct PopulationSpec {
  std::vector<CohortSpec> cohorts;
  int window_hours = 24;      // trajectory horizon
  double min_event_hour = 38; // all events land past window + gap
  double max_event_hour = 240;
  std::uint64_t seed = 1;
};

struct EpisodeTruth {
  std::string episode_id;
  int cohort_id = 0;
  std::vector<double> levels;  // per outcome feature, episode latents
  std::vector<double> slopes;
  double logit = 0.0;
};

struct SyntheticEpisodeSet {
  std::vector<RawEpisode> episodes;
  std::vector<EpisodeTruth> truth;  // sidecar only, never in the raw files
};

SyntheticEpisodeSet generate_population(const PopulationSpec& spec);

// The default 3-cohort population: opposing heart-rate trends, elevated
// labs in the third cohort, prevalences 0.034 / 0.017 / 0.124,
// cohort-specific demographics (young, middle-aged, elderly), and
// cohort-specific outcome coefficients. `separation` scales the
// inter-cohort level offsets.
PopulationSpec default_population_spec(int n_total = 3000,
                                      double separation = 1.0,
                                      std::uint64_t seed = 1);

void save_truth_sidecar(const std::vector<EpisodeTruth>& truth,
                        const std::string& path);
std::map<std::string, int> load_truth_sidecar(const std::string& path);

// Adjusted Rand index between predicted cohorts and the planted ones,
// joined on episode_id.
double evaluate_recovery(const std::map<std::string, int>& assignments,
                         const std::map<std::string, int>& ground_truth);

}  // namespace cohortmt
