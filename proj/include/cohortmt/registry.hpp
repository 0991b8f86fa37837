#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cohortmt {

// Fixed registry of the 29 time-varying physiological variables.
inline constexpr std::array<std::string_view, 29> kFeatureNames = {
    "anion_gap",
    "bicarbonate",
    "blood_ph",
    "blood_urea_nitrogen",
    "chloride",
    "creatinine",
    "diastolic_blood_pressure",
    "fraction_inspired_oxygen",
    "glascow_coma_scale_total",
    "glucose",
    "heart_rate",
    "hematocrit",
    "hemoglobin",
    "inr",
    "lactate",
    "magnesium",
    "mean_blood_pressure",
    "oxygen_saturation",
    "partial_thromboplastin_time",
    "phosphate",
    "platelets",
    "potassium",
    "prothrombin_time",
    "respiratory_rate",
    "sodium",
    "systolic_blood_pressure",
    "temperature",
    "weight",
    "white_blood_cell_count",
};

inline constexpr int kNumFeatures = static_cast<int>(kFeatureNames.size());

// Index of a registered feature name, or nullopt for unknown names.
std::optional<int> feature_index(std::string_view name);

}  // namespace cohortmt
