#include "tsce/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "tsce/distance.hpp"

namespace tsce {

bool TimeSeriesCollection::fully_observed() const {
  for (const auto& row : mask)
    for (bool m : row)
      if (!m) return false;
  return true;
}

void TimeSeriesCollection::validate() const {
  std::size_t n = ids.size();
  if (values.size() != n || mask.size() != n)
    throw std::runtime_error("collection: ids/values/mask size mismatch");
  if (labels && labels->size() != n)
    throw std::runtime_error("collection: labels length mismatch");
  std::size_t T = length();
  if (n > 0 && T < 2) throw std::runtime_error("collection: series length must be >= 2");
  for (std::size_t i = 0; i < n; ++i)
    if (values[i].size() != T || mask[i].size() != T)
      throw std::runtime_error("collection: ragged rows");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second)
      throw std::runtime_error("collection: duplicate id " + id);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TimeSeriesCollection load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "id")
    throw std::runtime_error("load_csv: header must start with 'id'");
  bool has_label = header.size() > 1 && header[1] == "label";
  std::size_t first_value = has_label ? 2 : 1;
  if (header.size() <= first_value)
    throw std::runtime_error("load_csv: header has no value columns");
  std::size_t T = header.size() - first_value;

  TimeSeriesCollection c;
  if (has_label) c.labels.emplace();
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: ragged row " + std::to_string(row_no) +
                               " (expected " + std::to_string(header.size()) +
                               " cells, got " + std::to_string(cells.size()) + ")");
    c.ids.push_back(cells[0]);
    if (has_label) {
      double lv;
      if (!parse_double(cells[1], lv))
        throw std::runtime_error("load_csv: bad label at row " + std::to_string(row_no));
      c.labels->push_back(static_cast<int>(lv));
    }
    Series row(T, 0.0);
    std::vector<bool> m(T, true);
    for (std::size_t j = 0; j < T; ++j) {
      const std::string& cell = cells[first_value + j];
      if (cell.empty()) {
        m[j] = false;
      } else if (!parse_double(cell, row[j])) {
        throw std::runtime_error("load_csv: non-numeric cell at row " +
                                 std::to_string(row_no) + " column " +
                                 std::to_string(first_value + j + 1));
      }
    }
    c.values.push_back(std::move(row));
    c.mask.push_back(std::move(m));
  }
  c.validate();
  return c;
}

void save_csv(const TimeSeriesCollection& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out << "id";
  if (c.labels) out << ",label";
  for (std::size_t t = 0; t < c.length(); ++t) out << ",t" << t;
  out << "\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << c.ids[i];
    if (c.labels) out << "," << (*c.labels)[i];
    for (std::size_t t = 0; t < c.length(); ++t) {
      out << ",";
      if (c.mask[i][t]) out << format_double(c.values[i][t]);
    }
    out << "\n";
  }
}

TimeSeriesCollection fill_missing_nearest(const TimeSeriesCollection& c,
                                          long* filled_count) {
  TimeSeriesCollection out = c;
  long filled = 0;
  std::size_t T = c.length();
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) any = any || c.mask[i][t];
    if (!any)
      throw std::runtime_error("fill_missing_nearest: series " + c.ids[i] +
                               " is fully missing");
    for (std::size_t t = 0; t < T; ++t) {
      if (c.mask[i][t]) continue;
      // nearest observed index; ties toward the earlier index
      std::size_t best = T;
      std::size_t best_dist = T + 1;
      for (std::size_t u = 0; u < T; ++u) {
        if (!c.mask[i][u]) continue;
        std::size_t dist = u > t ? u - t : t - u;
        if (dist < best_dist) {
          best_dist = dist;
          best = u;
        }
      }
      out.values[i][t] = c.values[i][best];
      out.mask[i][t] = true;
      ++filled;
    }
  }
  if (filled_count) *filled_count = filled;
  return out;
}

TimeSeriesCollection select_rows(const TimeSeriesCollection& c,
                                 const std::vector<std::size_t>& keep) {
  TimeSeriesCollection out;
  out.granularity = c.granularity;
  if (c.labels) out.labels.emplace();
  for (std::size_t i : keep) {
    out.ids.push_back(c.ids[i]);
    out.values.push_back(c.values[i]);
    out.mask.push_back(c.mask[i]);
    if (c.labels) out.labels->push_back((*c.labels)[i]);
  }
  return out;
}

std::pair<TimeSeriesCollection, PreprocessReport> drop_sparse(
    const TimeSeriesCollection& c, double threshold) {
  if (threshold <= 0 || threshold > 1)
    throw std::invalid_argument("drop_sparse: threshold must be in (0,1]");
  PreprocessReport rep;
  std::vector<std::size_t> keep;
  std::size_t T = c.length();
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t missing = 0;
    for (std::size_t t = 0; t < T; ++t)
      if (!c.mask[i][t]) ++missing;
    double frac = T == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(T);
    if (frac > threshold)
      rep.dropped_sparse.push_back(c.ids[i]);
    else
      keep.push_back(i);
  }
  return {select_rows(c, keep), rep};
}

TimeSeriesCollection minmax_scale(const TimeSeriesCollection& c, double lo, double hi,
                                  std::vector<ScaleRecord>* scaling) {
  if (!(lo < hi)) throw std::invalid_argument("minmax_scale: lo must be < hi");
  TimeSeriesCollection out = c;
  for (std::size_t i = 0; i < c.size(); ++i) {
    double mn = 0, mx = 0;
    bool seen = false;
    for (std::size_t t = 0; t < c.length(); ++t) {
      if (!c.mask[i][t]) continue;
      double v = c.values[i][t];
      if (!seen) {
        mn = mx = v;
        seen = true;
      } else {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
    }
    if (!seen) throw std::runtime_error("minmax_scale: series " + c.ids[i] +
                                        " has no observed values");
    for (std::size_t t = 0; t < c.length(); ++t) {
      if (!c.mask[i][t]) continue;
      out.values[i][t] = mx == mn
                             ? (lo + hi) / 2.0
                             : lo + (hi - lo) * (c.values[i][t] - mn) / (mx - mn);
    }
    if (scaling) scaling->push_back({c.ids[i], mn, mx});
  }
  return out;
}

std::pair<TimeSeriesCollection, PreprocessReport> remove_outliers(
    const TimeSeriesCollection& c, const DistanceMatrix& d) {
  std::size_t n = c.size();
  if (n < 4) throw std::runtime_error("remove_outliers: need at least 4 series");
  if (d.ids.size() != n)
    throw std::runtime_error("remove_outliers: distance matrix size mismatch");

  Series nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0;
    bool seen = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double v = d.values[i][j];
      if (!seen || v < best) {
        best = v;
        seen = true;
      }
    }
    nn[i] = best;
  }
  Series sorted = nn;
  std::sort(sorted.begin(), sorted.end());
  double q1 = quantile_sorted(sorted, 0.25);
  double q3 = quantile_sorted(sorted, 0.75);
  double fence = q3 + 1.5 * (q3 - q1);

  PreprocessReport rep;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (nn[i] > fence)
      rep.dropped_outliers.push_back(c.ids[i]);
    else
      keep.push_back(i);
  }
  return {select_rows(c, keep), rep};
}

TimeSeriesCollection slice_window(const TimeSeriesCollection& c, std::size_t start,
                                  std::size_t len) {
  if (start + len > c.length() || len == 0)
    throw std::runtime_error("slice_window: window out of range");
  TimeSeriesCollection out;
  out.granularity = c.granularity;
  if (c.labels) out.labels.emplace();
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool complete = true;
    for (std::size_t t = start; t < start + len; ++t) complete = complete && c.mask[i][t];
    if (!complete) continue;
    out.ids.push_back(c.ids[i]);
    out.values.emplace_back(c.values[i].begin() + start,
                            c.values[i].begin() + start + len);
    out.mask.emplace_back(len, true);
    if (c.labels) out.labels->push_back((*c.labels)[i]);
  }
  return out;
}

std::uint64_t collection_hash(const TimeSeriesCollection& c) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < c.size(); ++i) {
    h = fnv1a_str(c.ids[i], h);
    for (std::size_t t = 0; t < c.length(); ++t) {
      if (c.mask[i][t]) {
        h = fnv1a_str(format_double(c.values[i][t]), h);
      } else {
        h = fnv1a_str("_", h);
      }
    }
    if (c.labels) h = fnv1a_str(std::to_string((*c.labels)[i]), h);
  }
  return h;
}

}  // namespace tsce
