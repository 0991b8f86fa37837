#include "cohortmt/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cohortmt/common.hpp"

namespace cohortmt {

using nlohmann::json;

namespace {

void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void save_dataset(const TaskDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);

  json stats = json::array();
  for (const auto& e : ds.stats.per_feature)
    stats.push_back({{"present", e.present},
                     {"mean", e.mean},
                     {"stddev", e.stddev},
                     {"degenerate", e.degenerate}});
  json manifest = {
      {"window_hours", ds.window_hours},
      {"gap_hours", ds.gap_hours},
      {"seed", ds.seed},
      {"stats_digest", to_hex(ds.stats.digest())},
      {"sample_std", ds.stats.sample_std},
      {"stats", stats},
      {"buckets", {{"zmin", ds.layout.buckets.zmin}, {"zmax", ds.layout.buckets.zmax}}},
      {"static_dim", ds.layout.static_dim},
      {"genders", ds.statics.genders},
      {"age_cuts", ds.statics.age_cuts},
      {"ethnicities", ds.statics.ethnicities},
      {"episodes", ds.size()},
  };
  write_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");

  std::ostringstream eps;
  eps << "episode_id,label,split\n";
  static const char* split_names[] = {"train", "val", "test"};
  for (size_t i = 0; i < ds.size(); ++i)
    eps << ds.episode_ids[i] << ',' << ds.labels[i] << ','
        << split_names[static_cast<int>(ds.splits[i])] << '\n';
  write_atomic(dir + "/episodes.csv", eps.str());

  std::ostringstream ten;
  for (const auto& t : ds.tensors) {
    ten << t.hours << ' ' << t.dim;
    for (auto idx : t.ones) ten << ' ' << idx;
    ten << '\n';
  }
  write_atomic(dir + "/tensors.txt", ten.str());
}

TaskDataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw DataError("missing dataset manifest in " + dir);
  json manifest = json::parse(mf);

  TaskDataset ds;
  ds.window_hours = manifest.at("window_hours");
  ds.gap_hours = manifest.at("gap_hours");
  ds.seed = manifest.at("seed");
  ds.stats.sample_std = manifest.at("sample_std");
  for (const auto& e : manifest.at("stats")) {
    FeatureStats::Entry entry;
    entry.present = e.at("present");
    entry.mean = e.at("mean");
    entry.stddev = e.at("stddev");
    entry.degenerate = e.at("degenerate");
    ds.stats.per_feature.push_back(entry);
  }
  if (static_cast<int>(ds.stats.per_feature.size()) != kNumFeatures)
    throw DataError("stats entry count does not match feature registry");
  if (to_hex(ds.stats.digest()) != manifest.at("stats_digest"))
    throw DataError("stats digest mismatch in " + dir);
  ds.layout.buckets.zmin = manifest.at("buckets").at("zmin");
  ds.layout.buckets.zmax = manifest.at("buckets").at("zmax");
  ds.layout.static_dim = manifest.at("static_dim");
  ds.statics.genders = manifest.at("genders").get<std::vector<std::string>>();
  ds.statics.age_cuts = manifest.at("age_cuts").get<std::vector<double>>();
  ds.statics.ethnicities =
      manifest.at("ethnicities").get<std::vector<std::string>>();

  std::ifstream ef(dir + "/episodes.csv");
  if (!ef) throw DataError("missing episodes.csv in " + dir);
  std::string line;
  std::getline(ef, line);  // header
  while (std::getline(ef, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("malformed episodes.csv row: " + line);
    ds.episode_ids.push_back(line.substr(0, c1));
    ds.labels.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
    std::string s = line.substr(c2 + 1);
    if (s == "train")
      ds.splits.push_back(Split::Train);
    else if (s == "val")
      ds.splits.push_back(Split::Val);
    else if (s == "test")
      ds.splits.push_back(Split::Test);
    else
      throw DataError("unknown split tag: " + s);
  }

  std::ifstream tf(dir + "/tensors.txt");
  if (!tf) throw DataError("missing tensors.txt in " + dir);
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    BinaryTensor t;
    ss >> t.hours >> t.dim;
    std::uint32_t idx;
    while (ss >> idx) t.ones.push_back(idx);
    ds.tensors.push_back(std::move(t));
  }
  if (ds.tensors.size() != ds.episode_ids.size())
    throw DataError("tensor count does not match episode count in " + dir);
  return ds;
}

}  // namespace cohortmt
