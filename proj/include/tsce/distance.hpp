#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsce/common.hpp"
#include "tsce/dataset.hpp"

namespace tsce {

enum class MetricKind { euclidean, dtw, mpbd };

struct Metric {
  MetricKind kind = MetricKind::euclidean;
  std::optional<int> band;  // dtw: Sakoe-Chiba half-width; absent = unconstrained
  double eps = 1e-8;        // mpbd: dead zone on first differences
  double w_same = 0.0;
  double w_one = 0.5;
  double w_opp = 1.0;

  void validate() const;
  std::string descriptor() const;  // stable string form, used as cache key part
};

std::string to_string(MetricKind k);
MetricKind metric_kind_from_string(const std::string& s);

struct DistanceMatrix {
  Metric metric;
  std::vector<std::string> ids;
  Matrix values;  // symmetric n x n

  double at(std::size_t i, std::size_t j) const { return values[i][j]; }
  std::size_t size() const { return ids.size(); }
};

double euclidean(const Series& x, const Series& y);

// Squared local cost, sqrt of the accumulated optimum; steps (1,0),(0,1),(1,1).
double dtw(const Series& x, const Series& y,
           std::optional<int> band = std::nullopt);

// Normalized sign-agreement distance over first differences.
double mpbd(const Series& x, const Series& y, const Metric& m);

double metric_distance(const Metric& m, const Series& x, const Series& y);

// Symmetric matrix over all unordered pairs; rows computed in parallel,
// result independent of the schedule.
DistanceMatrix pairwise_matrix(const TimeSeriesCollection& c, const Metric& m);

// CSV cache form: metric descriptor line, ids header, then the lower triangle.
void save_distance_csv(const DistanceMatrix& d, const std::string& path);
DistanceMatrix load_distance_csv(const std::string& path);

}  // namespace tsce
