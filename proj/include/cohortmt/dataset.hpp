#pragma once

#include <string>

#include "cohortmt/ingest.hpp"

namespace cohortmt {

// Columnar on-disk container: manifest.json (window, gap, seed, layout,
// stats + digest, static vocabularies), episodes.csv (id, label, split),
// tensors.txt (one episode per line, sorted flat indices of set bits).
void save_dataset(const TaskDataset& ds, const std::string& dir);
TaskDataset load_dataset(const std::string& dir);

}  // namespace cohortmt
