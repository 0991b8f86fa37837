#include "cohortmt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cohortmt/common.hpp"
#include "cohortmt/evalstats.hpp"
#include "cohortmt/registry.hpp"

namespace cohortmt {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void validate(const PopulationSpec& spec) {
  if (spec.cohorts.empty()) throw ConfigError("population needs >= 1 cohort");
  for (const auto& c : spec.cohorts) {
    if (c.size < 1) throw ConfigError("cohort size must be >= 1");
    if (!(c.prevalence > 0.0 && c.prevalence < 1.0))
      throw ConfigError("prevalence must be in (0, 1)");
    if (c.outcome_features.size() != c.level_weights.size() ||
        c.outcome_features.size() != c.slope_weights.size())
      throw ConfigError("outcome weights must match outcome features");
    for (int f : c.outcome_features)
      if (!c.trajectories.count(f))
        throw ConfigError("outcome feature has no trajectory");
    for (const auto& [f, t] : c.trajectories) {
      if (f < 0 || f >= kNumFeatures)
        throw ConfigError("trajectory feature index out of registry range");
      if (t.noise < 0 || t.level_sd < 0 || t.slope_sd < 0)
        throw ConfigError("negative noise scale");
    }
  }
}

}  // namespace

SyntheticEpisodeSet generate_population(const PopulationSpec& spec) {
  validate(spec);
  const int t_hours = spec.window_hours;
  const double mid = (t_hours - 1) / 2.0;

  SyntheticEpisodeSet set;
  int global_index = 0;
  static const char* kGenders[] = {"F", "M"};
  static const char* kEthnicities[] = {"white", "black", "hispanic", "asian",
                                       "other"};
  static const double kEthnicityCdf[] = {0.62, 0.76, 0.88, 0.95, 1.0};

  for (size_t ci = 0; ci < spec.cohorts.size(); ++ci) {
    const auto& cohort = spec.cohorts[ci];
    std::vector<double> logits(cohort.size, 0.0);
    size_t first = set.episodes.size();

    for (int e = 0; e < cohort.size; ++e, ++global_index) {
      auto rng = make_rng(spec.seed, 1000 + global_index);
      RawEpisode ep;
      ep.episode_id = "p" + std::to_string(global_index) + "-a";
      std::normal_distribution<double> age_dist(cohort.age_mean, cohort.age_sd);
      ep.age = std::clamp(age_dist(rng), 16.0, 95.0);
      std::uniform_real_distribution<double> gender_u(0.0, 1.0);
      ep.gender = kGenders[gender_u(rng) < cohort.p_female ? 0 : 1];
      double eu = gender_u(rng);
      ep.ethnicity = kEthnicities[std::lower_bound(std::begin(kEthnicityCdf),
                                                   std::end(kEthnicityCdf), eu) -
                                  std::begin(kEthnicityCdf)];

      EpisodeTruth truth;
      truth.episode_id = ep.episode_id;
      truth.cohort_id = static_cast<int>(ci);

      std::normal_distribution<double> unit;
      std::map<int, std::pair<double, double>> latents;  // feature -> (lvl, slp)
      for (const auto& [f, t] : cohort.trajectories) {
        double lvl = t.level + t.level_sd * unit(rng);
        double slp = t.slope + t.slope_sd * unit(rng);
        latents[f] = {lvl, slp};
      }
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::uniform_real_distribution<double> jitter(-0.45, 0.45);
      for (const auto& [f, t] : cohort.trajectories) {
        auto [lvl, slp] = latents[f];
        for (int h = 0; h < t_hours; ++h) {
          double rate = cohort.sampling_rate;
          if (h >= 24) rate *= cohort.dropout_after_24;
          if (u01(rng) >= rate) continue;
          Measurement m;
          m.feature = f;
          m.hour_offset = std::max(0.0, h + jitter(rng));
          m.value = lvl + slp * (h - mid) / std::max(mid, 1.0) +
                    t.noise * unit(rng);
          ep.measurements.push_back(m);
        }
      }

      double z = 0.0;
      for (size_t j = 0; j < cohort.outcome_features.size(); ++j) {
        const auto& t = cohort.trajectories.at(cohort.outcome_features[j]);
        auto [lvl, slp] = latents[cohort.outcome_features[j]];
        double lvl_n = t.level_sd > 0 ? (lvl - t.level) / t.level_sd : 0.0;
        double slp_n = t.slope_sd > 0 ? (slp - t.slope) / t.slope_sd : 0.0;
        z += cohort.level_weights[j] * lvl_n + cohort.slope_weights[j] * slp_n;
        truth.levels.push_back(lvl);
        truth.slopes.push_back(slp);
      }
      logits[e] = z;
      truth.logit = z;
      set.episodes.push_back(std::move(ep));
      set.truth.push_back(std::move(truth));
    }

    // intercept calibration: mean predicted probability == prevalence
    double lo = -40.0, hi = 40.0;
    auto mean_p = [&](double b0) {
      double s = 0.0;
      for (double z : logits) s += sigmoid(b0 + z);
      return s / static_cast<double>(logits.size());
    };
    if (mean_p(lo) > cohort.prevalence || mean_p(hi) < cohort.prevalence)
      throw ConfigError("prevalence unreachable under the outcome logit");
    for (int it = 0; it < 200; ++it) {
      double b0 = 0.5 * (lo + hi);
      (mean_p(b0) < cohort.prevalence ? lo : hi) = b0;
    }
    double b0 = 0.5 * (lo + hi);

    for (int e = 0; e < cohort.size; ++e) {
      auto& ep = set.episodes[first + e];
      auto& truth = set.truth[first + e];
      truth.logit = b0 + logits[e];
      auto rng = make_rng(spec.seed, 2'000'000 + static_cast<int>(first) + e);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      int label = u01(rng) < sigmoid(truth.logit) ? 1 : 0;
      ep.label = label;
      std::uniform_real_distribution<double> event(spec.min_event_hour,
                                                   spec.max_event_hour);
      double t_event = event(rng);
      if (label) {
        ep.outcome_time = t_event;
        ep.discharge_time = t_event + 1.0;
      } else {
        ep.discharge_time = t_event;
      }
    }
  }
  return set;
}

PopulationSpec default_population_spec(int n_total, double separation,
                                       std::uint64_t seed) {
  const int heart_rate = *feature_index("heart_rate");
  const int systolic = *feature_index("systolic_blood_pressure");
  const int mean_bp = *feature_index("mean_blood_pressure");
  const int resp = *feature_index("respiratory_rate");
  const int lactate = *feature_index("lactate");
  const int glucose = *feature_index("glucose");
  const int magnesium = *feature_index("magnesium");
  const int potassium = *feature_index("potassium");
  const int phosphate = *feature_index("phosphate");
  const int creatinine = *feature_index("creatinine");
  const int hemoglobin = *feature_index("hemoglobin");
  const int wbc = *feature_index("white_blood_cell_count");
  const int temperature = *feature_index("temperature");
  const int inr = *feature_index("inr");
  const int bun = *feature_index("blood_urea_nitrogen");
  const int platelets = *feature_index("platelets");

  PopulationSpec spec;
  spec.seed = seed;
  spec.window_hours = 24;

  auto traj = [&](double level, double slope) {
    TrajectorySpec t;
    t.level = level * separation;
    t.slope = slope;
    t.level_sd = 0.3;
    t.slope_sd = 0.3;
    return t;
  };

  // cohort 0: decreasing heart rate, elevated blood pressure that settles
  CohortSpec c0;
  c0.size = static_cast<int>(std::lround(n_total * 0.363));
  c0.prevalence = 0.0341;
  c0.trajectories[heart_rate] = traj(-1.0, -1.0);
  c0.trajectories[systolic] = traj(1.5, -0.8);
  c0.trajectories[mean_bp] = traj(1.2, -0.6);
  c0.trajectories[resp] = traj(0.0, 0.0);
  c0.trajectories[lactate] = traj(-0.8, 0.0);
  c0.trajectories[glucose] = traj(-0.5, 0.0);
  c0.trajectories[creatinine] = traj(-0.4, 0.2);
  c0.trajectories[hemoglobin] = traj(0.6, 0.0);
  c0.trajectories[inr] = traj(0.5, -0.2);
  c0.outcome_features = {heart_rate, lactate, systolic};
  c0.level_weights = {0.5, 1.0, -0.5};
  c0.slope_weights = {2.0, 0.5, 0.0};
  c0.age_mean = 32.0;
  c0.age_sd = 5.0;
  c0.p_female = 0.85;
  c0.sampling_rate = 0.85;

  // cohort 1: increasing heart rate, elevated magnesium/lactate/potassium
  CohortSpec c1;
  c1.size = static_cast<int>(std::lround(n_total * 0.197));
  c1.prevalence = 0.0166;
  c1.trajectories[heart_rate] = traj(-0.6, 1.0);
  c1.trajectories[systolic] = traj(-1.2, 0.0);
  c1.trajectories[mean_bp] = traj(-1.0, 0.3);
  c1.trajectories[magnesium] = traj(1.2, 0.0);
  c1.trajectories[lactate] = traj(1.0, 0.0);
  c1.trajectories[potassium] = traj(1.1, 0.0);
  c1.trajectories[phosphate] = traj(0.8, -0.3);
  c1.outcome_features = {heart_rate, lactate, systolic};
  c1.level_weights = {-0.5, 1.0, 0.5};
  c1.slope_weights = {-2.0, 0.0, 0.5};
  c1.age_mean = 56.0;
  c1.age_sd = 5.0;
  c1.p_female = 0.15;
  c1.sampling_rate = 0.45;

  // cohort 2: elevated labs throughout, rising heart rate
  CohortSpec c2;
  c2.size = n_total - c0.size - c1.size;
  c2.prevalence = 0.1241;
  c2.trajectories[heart_rate] = traj(0.9, 0.6);
  c2.trajectories[systolic] = traj(1.3, 0.2);
  c2.trajectories[mean_bp] = traj(0.3, 0.0);
  c2.trajectories[glucose] = traj(1.4, 0.0);
  c2.trajectories[lactate] = traj(0.8, 0.4);
  c2.trajectories[resp] = traj(0.7, 0.0);
  c2.trajectories[wbc] = traj(1.0, 0.3);
  c2.trajectories[temperature] = traj(0.8, 0.0);
  c2.trajectories[bun] = traj(0.9, 0.2);
  c2.trajectories[platelets] = traj(-0.6, 0.0);
  c2.outcome_features = {heart_rate, lactate, systolic};
  c2.level_weights = {1.0, 1.5, 1.0};
  c2.slope_weights = {0.5, 1.0, -0.5};
  c2.age_mean = 80.0;
  c2.age_sd = 5.0;
  c2.p_female = 0.75;
  c2.sampling_rate = 0.65;

  spec.cohorts = {c0, c1, c2};
  // the outcome-bearing trajectories keep wide per-episode slope variation
  // so the risk signal stays strong relative to the cohort signature
  for (auto& c : spec.cohorts)
    for (int f : {heart_rate, lactate, systolic}) c.trajectories[f].slope_sd = 1.0;
  return spec;
}

void save_truth_sidecar(const std::vector<EpisodeTruth>& truth,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "episode_id,cohort_id\n";
  for (const auto& t : truth) f << t.episode_id << ',' << t.cohort_id << '\n';
}

std::map<std::string, int> load_truth_sidecar(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::map<std::string, int> out;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto c = line.find(',');
    if (c == std::string::npos) throw DataError("malformed sidecar row: " + line);
    out[line.substr(0, c)] = std::stoi(line.substr(c + 1));
  }
  return out;
}

double evaluate_recovery(const std::map<std::string, int>& assignments,
                         const std::map<std::string, int>& ground_truth) {
  std::vector<int> a, b;
  for (const auto& [id, cohort] : assignments) {
    auto it = ground_truth.find(id);
    if (it == ground_truth.end()) continue;
    a.push_back(cohort);
    b.push_back(it->second);
  }
  if (a.empty())
    throw DataError("assignment and ground-truth episode sets are disjoint");
  return adjusted_rand_index(a, b);
}

}  // namespace cohortmt
