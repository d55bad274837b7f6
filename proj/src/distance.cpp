#include "tsce/distance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace tsce {

void Metric::validate() const {
  if (band && *band < 0) throw std::invalid_argument("metric: band must be >= 0");
  if (eps < 0) throw std::invalid_argument("metric: eps must be >= 0");
  if (!(0 <= w_same && w_same <= w_one && w_one <= w_opp))
    throw std::invalid_argument("metric: need 0 <= w_same <= w_one <= w_opp");
}

std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::dtw: return "dtw";
    case MetricKind::mpbd: return "mpbd";
  }
  throw std::logic_error("unknown metric kind");
}

MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "euclidean") return MetricKind::euclidean;
  if (s == "dtw") return MetricKind::dtw;
  if (s == "mpbd") return MetricKind::mpbd;
  throw std::invalid_argument("unknown metric: " + s);
}

std::string Metric::descriptor() const {
  std::string d = to_string(kind);
  if (kind == MetricKind::dtw && band) d += "(w=" + std::to_string(*band) + ")";
  if (kind == MetricKind::mpbd)
    d += "(eps=" + format_double(eps) + ",same=" + format_double(w_same) +
         ",one=" + format_double(w_one) + ",opp=" + format_double(w_opp) + ")";
  return d;
}

double euclidean(const Series& x, const Series& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("euclidean: length mismatch");
  double s = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double d = x[t] - y[t];
    s += d * d;
  }
  return std::sqrt(s);
}

double dtw(const Series& x, const Series& y, std::optional<int> band) {
  std::size_t n = x.size(), m = y.size();
  if (n == 0 || m == 0) throw std::invalid_argument("dtw: empty series");
  if (band && *band < 0) throw std::invalid_argument("dtw: band must be >= 0");
  long w = band ? *band : -1;
  if (w >= 0 && std::llabs(static_cast<long long>(n) - static_cast<long long>(m)) > w)
    throw std::invalid_argument("dtw: band narrower than the length difference");

  const double inf = std::numeric_limits<double>::infinity();
  // rolling two-row DP over accumulated squared cost
  Series prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t jlo = 0, jhi = m - 1;
    if (w >= 0) {
      long lo = static_cast<long>(i) - w, hi = static_cast<long>(i) + w;
      jlo = lo > 0 ? static_cast<std::size_t>(lo) : 0;
      jhi = hi < static_cast<long>(m - 1) ? static_cast<std::size_t>(hi) : m - 1;
    }
    std::fill(cur.begin(), cur.end(), inf);
    for (std::size_t j = jlo; j <= jhi; ++j) {
      double c = (x[i] - y[j]) * (x[i] - y[j]);
      if (i == 0 && j == 0) {
        cur[j] = c;
        continue;
      }
      double best = inf;
      if (i > 0) best = std::min(best, prev[j]);
      if (j > 0) best = std::min(best, cur[j - 1]);
      if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      cur[j] = c + best;
    }
    std::swap(prev, cur);
  }
  double total = prev[m - 1];
  if (!std::isfinite(total)) throw std::runtime_error("dtw: infeasible band");
  return std::sqrt(total);
}

namespace {

int diff_sign(double d, double eps) {
  if (d > eps) return 1;
  if (d < -eps) return -1;
  return 0;
}

}  // namespace

double mpbd(const Series& x, const Series& y, const Metric& m) {
  m.validate();
  if (x.size() != y.size()) throw std::invalid_argument("mpbd: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("mpbd: need length >= 2");
  double total = 0;
  std::size_t moved = 0;
  for (std::size_t t = 1; t < x.size(); ++t) {
    int sx = diff_sign(x[t] - x[t - 1], m.eps);
    int sy = diff_sign(y[t] - y[t - 1], m.eps);
    if (sx == 0 && sy == 0) continue;
    ++moved;
    if (sx == 0 || sy == 0)
      total += m.w_one;
    else if (sx == sy)
      total += m.w_same;
    else
      total += m.w_opp;
  }
  return moved == 0 ? 0.0 : total / static_cast<double>(moved);
}

double metric_distance(const Metric& m, const Series& x, const Series& y) {
  switch (m.kind) {
    case MetricKind::euclidean: return euclidean(x, y);
    case MetricKind::dtw: return dtw(x, y, m.band);
    case MetricKind::mpbd: return mpbd(x, y, m);
  }
  throw std::logic_error("unknown metric kind");
}

DistanceMatrix pairwise_matrix(const TimeSeriesCollection& c, const Metric& m) {
  m.validate();
  if (!c.fully_observed())
    throw std::runtime_error("pairwise_matrix: collection has missing values");
  std::size_t n = c.size();
  DistanceMatrix d;
  d.metric = m;
  d.ids = c.ids;
  d.values.assign(n, Series(n, 0.0));

  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto work = [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < i; ++j) {
          double v;
          try {
            v = metric_distance(m, c.values[i], c.values[j]);
          } catch (const std::exception& e) {
            throw std::runtime_error("pairwise_matrix: pair (" + c.ids[i] + "," +
                                     c.ids[j] + "): " + e.what());
          }
          d.values[i][j] = v;
        }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = std::max<std::size_t>(1, std::min<std::size_t>(hw ? hw : 1, n));
  if (n_threads <= 1 || n < 16) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (n + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.values[i][j] = d.values[j][i];
  return d;
}

void save_distance_csv(const DistanceMatrix& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_distance_csv: cannot open " + path);
  out << "# metric," << d.metric.descriptor() << "\n";
  out << "id";
  for (const auto& id : d.ids) out << "," << id;
  out << "\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.ids[i];
    for (std::size_t j = 0; j <= i; ++j) out << "," << format_double(d.values[i][j]);
    out << "\n";
  }
}

DistanceMatrix load_distance_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_distance_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# metric,", 0) != 0)
    throw std::runtime_error("load_distance_csv: missing metric line");
  std::string desc = line.substr(9);

  DistanceMatrix d;
  // descriptor is informational here; kind recoverable from its prefix
  if (desc.rfind("dtw", 0) == 0)
    d.metric.kind = MetricKind::dtw;
  else if (desc.rfind("mpbd", 0) == 0)
    d.metric.kind = MetricKind::mpbd;
  else
    d.metric.kind = MetricKind::euclidean;

  if (!std::getline(in, line)) throw std::runtime_error("load_distance_csv: no header");
  std::string cell;
  {
    std::stringstream ss(line);
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (!first) d.ids.push_back(cell);
      first = false;
    }
  }
  std::size_t n = d.ids.size();
  d.values.assign(n, Series(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw std::runtime_error("load_distance_csv: truncated matrix");
    std::stringstream ss(line);
    std::getline(ss, cell, ',');  // row id
    for (std::size_t j = 0; j <= i; ++j) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("load_distance_csv: short row");
      double v;
      if (!parse_double(cell, v))
        throw std::runtime_error("load_distance_csv: bad value in row " + d.ids[i]);
      d.values[i][j] = v;
      d.values[j][i] = v;
    }
  }
  return d;
}

}  // namespace tsce
