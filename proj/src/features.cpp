#include "tsce/features.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

namespace tsce {

namespace {

double median_of(Series v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double pearson(const Series& a, const Series& b) {
  double ma = mean_of(a), mb = mean_of(b);
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace

FeatureVector extract_features(const Series& x) {
  std::size_t T = x.size();
  if (T < 3) throw std::invalid_argument("extract_features: need length >= 3");

  FeatureVector f;
  auto set = [&](const char* name, double v) {
    for (std::size_t i = 0; i < kFeatureNames.size(); ++i)
      if (kFeatureNames[i] == std::string_view(name)) {
        f.values[i] = v;
        return;
      }
    throw std::logic_error("unknown feature name");
  };

  Series diff(T - 1), absdiff(T - 1);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    diff[t] = x[t + 1] - x[t];
    absdiff[t] = std::abs(diff[t]);
  }

  set("autocorr_lag1",
      pearson(Series(x.begin(), x.end() - 1), Series(x.begin() + 1, x.end())));

  double energy = 0, centroid_num = 0;
  for (std::size_t t = 0; t < T; ++t) {
    energy += x[t] * x[t];
    centroid_num += static_cast<double>(t) * x[t] * x[t];
  }
  set("centroid", energy > 0 ? centroid_num / energy : 0.0);
  set("abs_energy", energy);

  set("mean_abs_diff", mean_of(absdiff));
  set("mean_diff", mean_of(diff));
  set("median_abs_diff", median_of(absdiff));
  set("median_diff", median_of(diff));
  double sad = 0;
  for (double v : absdiff) sad += v;
  set("sum_abs_diff", sad);

  double m = mean_of(x);
  int crossings = 0;
  for (std::size_t t = 0; t + 1 < T; ++t)
    if ((x[t] - m) * (x[t + 1] - m) < 0) ++crossings;
  set("zero_cross_rate", static_cast<double>(crossings) / static_cast<double>(T - 1));

  // OLS slope of x on t = 0..T-1
  double tmean = static_cast<double>(T - 1) / 2.0;
  double sxy = 0, sxx = 0;
  for (std::size_t t = 0; t < T; ++t) {
    sxy += (static_cast<double>(t) - tmean) * (x[t] - m);
    sxx += (static_cast<double>(t) - tmean) * (static_cast<double>(t) - tmean);
  }
  set("slope", sxy / sxx);

  double auc = 0;
  for (std::size_t t = 0; t + 1 < T; ++t) auc += (x[t] + x[t + 1]) / 2.0;
  set("area_under_curve", auc);

  double mx = *std::max_element(x.begin(), x.end());
  double mn = *std::min_element(x.begin(), x.end());
  set("max", mx);
  set("min", mn);
  set("peak_to_peak", mx - mn);
  set("mean", m);
  double var = variance_pop(x);
  set("variance", var);
  set("std", std::sqrt(var));

  // Shannon entropy (natural log) of the 10-equal-width-bin histogram
  double entropy = 0;
  if (mx > mn) {
    std::array<std::size_t, 10> bins{};
    for (double v : x) {
      auto b = static_cast<std::size_t>((v - mn) / (mx - mn) * 10.0);
      if (b >= 10) b = 9;
      ++bins[b];
    }
    for (std::size_t cnt : bins) {
      if (cnt == 0) continue;
      double p = static_cast<double>(cnt) / static_cast<double>(T);
      entropy -= p * std::log(p);
    }
  }
  set("entropy", entropy);

  int pos = 0, neg = 0;
  for (std::size_t t = 1; t + 1 < T; ++t) {
    if (x[t - 1] < x[t] && x[t] > x[t + 1]) ++pos;
    if (x[t - 1] > x[t] && x[t] < x[t + 1]) ++neg;
  }
  set("pos_turning", pos);
  set("neg_turning", neg);
  return f;
}

std::string to_string(InputConfig c) {
  switch (c) {
    case InputConfig::default_config: return "default";
    case InputConfig::feat_only: return "feat_only";
    case InputConfig::with_feats: return "with_feats";
  }
  throw std::logic_error("unknown input config");
}

InputConfig input_config_from_string(const std::string& s) {
  if (s == "default") return InputConfig::default_config;
  if (s == "feat_only") return InputConfig::feat_only;
  if (s == "with_feats") return InputConfig::with_feats;
  throw std::invalid_argument("unknown input config: " + s);
}

Series concat_config(const Series& x, const FeatureVector& f, InputConfig config) {
  Series out;
  if (config != InputConfig::feat_only) out = x;
  if (config != InputConfig::default_config)
    out.insert(out.end(), f.values.begin(), f.values.end());
  return out;
}

std::vector<std::string> input_position_names(std::size_t T, InputConfig config) {
  std::vector<std::string> names;
  if (config != InputConfig::feat_only)
    for (std::size_t t = 0; t < T; ++t) names.push_back("t" + std::to_string(t));
  if (config != InputConfig::default_config)
    for (const char* n : kFeatureNames) names.emplace_back(n);
  return names;
}

std::size_t time_segment_length(std::size_t T, InputConfig config) {
  return config == InputConfig::feat_only ? 0 : T;
}

}  // namespace tsce
