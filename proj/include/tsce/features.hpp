#pragma once

#include <array>
#include <string>
#include <vector>

#include "tsce/common.hpp"

namespace tsce {

// Fixed project-wide feature order.
inline constexpr std::array<const char*, 20> kFeatureNames = {
    "autocorr_lag1",  "centroid",    "mean_abs_diff", "mean_diff",
    "median_abs_diff", "median_diff", "sum_abs_diff",  "zero_cross_rate",
    "slope",          "abs_energy",  "area_under_curve", "entropy",
    "peak_to_peak",   "pos_turning", "neg_turning",   "max",
    "min",            "mean",        "variance",      "std"};

struct FeatureVector {
  std::array<double, 20> values{};
};

// 15 temporal + 5 statistical features; requires |x| >= 3.
FeatureVector extract_features(const Series& x);

enum class InputConfig { default_config, feat_only, with_feats };

std::string to_string(InputConfig c);
InputConfig input_config_from_string(const std::string& s);

// default -> x; feat_only -> f; with_feats -> x followed by f.
Series concat_config(const Series& x, const FeatureVector& f, InputConfig config);

// Position names for the concatenated axis: "t{i}" then feature names.
std::vector<std::string> input_position_names(std::size_t T, InputConfig config);

// Length of the leading time segment of the concatenated input (0, T or T).
std::size_t time_segment_length(std::size_t T, InputConfig config);

}  // namespace tsce
