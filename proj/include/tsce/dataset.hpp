#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsce/common.hpp"

namespace tsce {

struct DistanceMatrix;  // distance.hpp

// Equal-length series with ids, an observed-value mask, and optional labels.
struct TimeSeriesCollection {
  std::vector<std::string> ids;
  Matrix values;                        // n x T
  std::vector<std::vector<bool>> mask;  // true = observed
  std::optional<std::vector<int>> labels;
  std::string granularity;

  std::size_t size() const { return ids.size(); }
  std::size_t length() const { return values.empty() ? 0 : values[0].size(); }
  bool fully_observed() const;
  void validate() const;  // throws on any structural invariant violation
};

struct ScaleRecord {
  std::string id;
  double min = 0, max = 0;
};

struct PreprocessReport {
  std::vector<std::string> dropped_sparse;
  std::vector<std::string> dropped_outliers;
  long filled_count = 0;
  std::vector<ScaleRecord> scaling;
};

// CSV with header `id,t0,t1,...` or `id,label,t0,...`; empty cell = missing.
TimeSeriesCollection load_csv(const std::string& path);
void save_csv(const TimeSeriesCollection& c, const std::string& path);

// Each missing cell takes the observed value at minimal index distance,
// ties toward the earlier index. Errors on a fully missing series.
TimeSeriesCollection fill_missing_nearest(const TimeSeriesCollection& c,
                                          long* filled_count = nullptr);

// Removes series whose missing fraction is strictly greater than threshold.
std::pair<TimeSeriesCollection, PreprocessReport> drop_sparse(
    const TimeSeriesCollection& c, double threshold = 0.8);

// Per-series affine map onto [lo,hi]; constant series map to the midpoint.
TimeSeriesCollection minmax_scale(const TimeSeriesCollection& c, double lo = 0.1,
                                  double hi = 1.0,
                                  std::vector<ScaleRecord>* scaling = nullptr);

// Removes series whose nearest-neighbor distance exceeds Q3 + 1.5*IQR of the
// nearest-neighbor-distance distribution.
std::pair<TimeSeriesCollection, PreprocessReport> remove_outliers(
    const TimeSeriesCollection& c, const DistanceMatrix& d);

// Restricts values to [start, start+len); series with any missing value
// inside the window are dropped.
TimeSeriesCollection slice_window(const TimeSeriesCollection& c,
                                  std::size_t start, std::size_t len);

// Content hash over ids, values, mask and labels (distance-cache key part).
std::uint64_t collection_hash(const TimeSeriesCollection& c);

// Subset of rows, preserving order of `keep`.
TimeSeriesCollection select_rows(const TimeSeriesCollection& c,
                                 const std::vector<std::size_t>& keep);

}  // namespace tsce
