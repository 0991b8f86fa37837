#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cohortmt {

struct Measurement {
  double hour_offset = 0.0;  // real hours from admission, >= 0
  int feature = -1;          // index into the feature registry
  double value = 0.0;
};

struct RawEpisode {
  std::string episode_id;  // "<patient_id>-<stay_id>"
  double age = 0.0;
  std::string gender;
  std::string ethnicity;
  std::string care_unit;  // may be empty
  std::vector<Measurement> measurements;
  std::optional<double> outcome_time;  // hours; present implies label == 1
  double discharge_time = 0.0;
  int label = 0;  // in-hospital mortality incl. DNR/CMO

  std::string patient_id() const;
};

struct RecordDiagnostic {
  std::string where;  // file:line or episode id
  std::string message;
};

struct EpisodeLoadResult {
  std::vector<RawEpisode> episodes;
  std::vector<RecordDiagnostic> rejects;
};

// Reads the episode-header file and the measurement file (both delimited
// text with a header row; see docs/data_format.md). Malformed rows are
// collected as diagnostics; well-formed rows are kept.
EpisodeLoadResult load_episodes(const std::string& header_path,
                                const std::string& measurements_path);

void save_episodes(const std::vector<RawEpisode>& episodes,
                   const std::string& header_path,
                   const std::string& measurements_path);

}  // namespace cohortmt
