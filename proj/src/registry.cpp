#include "cohortmt/registry.hpp"

#include <unordered_map>

namespace cohortmt {

std::optional<int> feature_index(std::string_view name) {
  static const std::unordered_map<std::string_view, int> index = [] {
    std::unordered_map<std::string_view, int> m;
    for (int i = 0; i < kNumFeatures; ++i) m.emplace(kFeatureNames[i], i);
    return m;
  }();
  auto it = index.find(name);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

}  // namespace cohortmt
