#include "cohortmt/episode.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cohortmt/common.hpp"
#include "cohortmt/registry.hpp"

namespace cohortmt {

std::string RawEpisode::patient_id() const {
  auto pos = episode_id.find('-');
  return pos == std::string::npos ? episode_id : episode_id.substr(0, pos);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_real(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

EpisodeLoadResult load_episodes(const std::string& header_path,
                                const std::string& measurements_path) {
  EpisodeLoadResult result;
  std::unordered_map<std::string, size_t> by_id;

  std::ifstream hf(header_path);
  if (!hf) throw DataError("cannot open episode header file: " + header_path);
  std::string line;
  if (!std::getline(hf, line))
    throw DataError("empty episode header file: " + header_path);
  int lineno = 1;
  while (std::getline(hf, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto where = header_path + ":" + std::to_string(lineno);
    auto f = split_csv(line);
    if (f.size() != 8) {
      result.rejects.push_back({where, "expected 8 fields"});
      continue;
    }
    RawEpisode ep;
    ep.episode_id = f[0];
    double age, discharge;
    if (ep.episode_id.empty() || !parse_real(f[1], age) ||
        !parse_real(f[5], discharge)) {
      result.rejects.push_back({where, "malformed id/age/discharge_time"});
      continue;
    }
    ep.age = age;
    ep.gender = f[2];
    ep.ethnicity = f[3];
    ep.care_unit = f[4];
    ep.discharge_time = discharge;
    if (!f[6].empty()) {
      double t;
      if (!parse_real(f[6], t)) {
        result.rejects.push_back({where, "malformed outcome_time"});
        continue;
      }
      ep.outcome_time = t;
    }
    if (f[7] != "0" && f[7] != "1") {
      result.rejects.push_back({where, "label must be 0 or 1"});
      continue;
    }
    ep.label = f[7] == "1" ? 1 : 0;
    if (ep.discharge_time <= 0) {
      result.rejects.push_back({where, "discharge_time must be > 0"});
      continue;
    }
    if (ep.outcome_time && ep.label != 1) {
      result.rejects.push_back({where, "outcome_time present but label = 0"});
      continue;
    }
    if (by_id.count(ep.episode_id)) {
      result.rejects.push_back({where, "duplicate episode_id " + ep.episode_id});
      continue;
    }
    by_id.emplace(ep.episode_id, result.episodes.size());
    result.episodes.push_back(std::move(ep));
  }

  std::ifstream mf(measurements_path);
  if (!mf) throw DataError("cannot open measurements file: " + measurements_path);
  if (!std::getline(mf, line))
    throw DataError("empty measurements file: " + measurements_path);
  lineno = 1;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto where = measurements_path + ":" + std::to_string(lineno);
    auto f = split_csv(line);
    if (f.size() != 4) {
      result.rejects.push_back({where, "expected 4 fields"});
      continue;
    }
    auto it = by_id.find(f[0]);
    if (it == by_id.end()) {
      result.rejects.push_back({where, "unknown episode_id " + f[0]});
      continue;
    }
    Measurement m;
    if (!parse_real(f[1], m.hour_offset) || !parse_real(f[3], m.value)) {
      result.rejects.push_back({where, "malformed hour_offset/value"});
      continue;
    }
    if (m.hour_offset < 0) {
      result.rejects.push_back({where, "negative hour_offset rejected"});
      continue;
    }
    auto idx = feature_index(f[2]);
    if (!idx) {
      result.rejects.push_back({where, "unknown feature name " + f[2]});
      continue;
    }
    m.feature = *idx;
    result.episodes[it->second].measurements.push_back(m);
  }
  return result;
}

void save_episodes(const std::vector<RawEpisode>& episodes,
                   const std::string& header_path,
                   const std::string& measurements_path) {
  std::ofstream hf(header_path);
  if (!hf) throw DataError("cannot write " + header_path);
  hf << "episode_id,age,gender,ethnicity,care_unit,discharge_time,outcome_time,label\n";
  for (const auto& ep : episodes) {
    hf << ep.episode_id << ',' << fmt(ep.age) << ',' << ep.gender << ','
       << ep.ethnicity << ',' << ep.care_unit << ',' << fmt(ep.discharge_time)
       << ',' << (ep.outcome_time ? fmt(*ep.outcome_time) : std::string())
       << ',' << ep.label << '\n';
  }
  std::ofstream mf(measurements_path);
  if (!mf) throw DataError("cannot write " + measurements_path);
  mf << "episode_id,hour_offset,feature_name,value\n";
  for (const auto& ep : episodes) {
    for (const auto& m : ep.measurements) {
      mf << ep.episode_id << ',' << fmt(m.hour_offset) << ','
         << kFeatureNames[m.feature] << ',' << fmt(m.value) << '\n';
    }
  }
}

}  // namespace cohortmt
