#include "tsce/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace tsce {

namespace {

double sqdist(const Series& a, const Series& b) {
  double s = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double d = a[t] - b[t];
    s += d * d;
  }
  return s;
}

double wcss(const Matrix& X, const std::vector<int>& assign, const Matrix& centers) {
  double s = 0;
  for (std::size_t i = 0; i < X.size(); ++i) s += sqdist(X[i], centers[assign[i]]);
  return s;
}

Matrix cluster_means(const Matrix& X, const std::vector<int>& assign, int k) {
  std::size_t T = X[0].size();
  Matrix centers(k, Series(T, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < X.size(); ++i) {
    ++counts[assign[i]];
    for (std::size_t t = 0; t < T; ++t) centers[assign[i]][t] += X[i][t];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t t = 0; t < T; ++t) centers[c][t] /= static_cast<double>(counts[c]);
  }
  return centers;
}

}  // namespace

ClusteringResult kmeans_fit(const TimeSeriesCollection& c, int k, std::uint64_t seed,
                            int max_iter) {
  std::size_t n = c.size();
  if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("kmeans_fit: k exceeds number of series");
  if (!c.fully_observed())
    throw std::runtime_error("kmeans_fit: collection has missing values");
  const Matrix& X = c.values;

  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  Matrix centers;
  centers.reserve(k);

  // k-means++ seeding
  std::vector<char> is_center(n, 0);
  {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    centers.push_back(X[first]);
    is_center[first] = 1;
  }
  Series d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(X[i], centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = n;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r) {
          chosen = i;
          break;
        }
      }
      if (chosen == n) {  // numeric edge: land on the last positive-mass point
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0) {
            chosen = i;
            break;
          }
      }
    }
    if (chosen == n) {  // all remaining mass zero: lowest non-center index
      for (std::size_t i = 0; i < n; ++i)
        if (!is_center[i]) {
          chosen = i;
          break;
        }
    }
    is_center[chosen] = 1;
    centers.push_back(X[chosen]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sqdist(X[i], centers.back()));
  }

  std::vector<int> assign(n, 0), prev;
  ClusteringResult res;
  int it = 0;
  while (it < max_iter) {
    ++it;
    // assignment step; ties toward the lowest center index
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int bc = 0;
      for (int cidx = 0; cidx < k; ++cidx) {
        double v = sqdist(X[i], centers[cidx]);
        if (v < best) {
          best = v;
          bc = cidx;
        }
      }
      assign[i] = bc;
    }
    // empty-cluster repair: relocate the empty center onto the point farthest
    // from its assigned center, taken from a cluster with >= 2 members
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
    for (int e = 0; e < k; ++e) {
      if (counts[e] != 0) continue;
      double far_d = -1;
      std::size_t far_i = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] < 2) continue;
        double v = sqdist(X[i], centers[assign[i]]);
        if (v > far_d) {
          far_d = v;
          far_i = i;
        }
      }
      if (far_i == n) throw std::logic_error("kmeans_fit: unrepairable empty cluster");
      --counts[assign[far_i]];
      assign[far_i] = e;
      counts[e] = 1;
      centers[e] = X[far_i];
    }
    centers = cluster_means(X, assign, k);
    res.cost_history.push_back(wcss(X, assign, centers));
    if (!prev.empty() && assign == prev) break;
    prev = assign;
  }

  res.k = k;
  res.assignments = assign;
  res.centers = std::move(centers);
  res.inertia = res.cost_history.back();
  res.metric.kind = MetricKind::euclidean;
  res.iterations = it;
  return res;
}

ClusteringResult pam_fit(const DistanceMatrix& d, int k, std::uint64_t /*seed*/) {
  std::size_t n = d.size();
  if (k < 1) throw std::invalid_argument("pam_fit: k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("pam_fit: k exceeds number of series");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<int> medoids;
  std::vector<char> is_medoid(n, 0);

  // BUILD: first medoid minimizes total distance, then greedy max cost reduction
  {
    double best = inf;
    int bi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += d.values[j][i];
      if (s < best) {
        best = s;
        bi = static_cast<int>(i);
      }
    }
    medoids.push_back(bi);
    is_medoid[bi] = 1;
  }
  Series dnear(n);
  for (std::size_t j = 0; j < n; ++j) dnear[j] = d.values[j][medoids[0]];
  while (static_cast<int>(medoids.size()) < k) {
    double best_gain = -inf;
    int bc = -1;
    for (std::size_t cand = 0; cand < n; ++cand) {
      if (is_medoid[cand]) continue;
      double gain = 0;
      for (std::size_t j = 0; j < n; ++j)
        gain += std::max(0.0, dnear[j] - d.values[j][cand]);
      if (gain > best_gain) {
        best_gain = gain;
        bc = static_cast<int>(cand);
      }
    }
    medoids.push_back(bc);
    is_medoid[bc] = 1;
    for (std::size_t j = 0; j < n; ++j)
      dnear[j] = std::min(dnear[j], d.values[j][bc]);
  }

  auto total_cost = [&](const std::vector<int>& meds) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double b = inf;
      for (int m : meds) b = std::min(b, d.values[j][m]);
      s += b;
    }
    return s;
  };

  ClusteringResult res;
  double cost = total_cost(medoids);
  res.cost_history.push_back(cost);
  int swaps = 0;

  // SWAP: evaluate all (medoid, candidate) deltas via nearest/second-nearest
  // bookkeeping; accept the best strictly improving swap until none exists.
  std::vector<int> near(n);
  Series d1(n), d2(n);
  std::vector<double> corr(k);
  while (true) {
    for (std::size_t j = 0; j < n; ++j) {
      double b1 = inf, b2 = inf;
      int n1 = 0;
      for (int mi = 0; mi < k; ++mi) {
        double v = d.values[j][medoids[mi]];
        if (v < b1) {
          b2 = b1;
          b1 = v;
          n1 = mi;
        } else if (v < b2) {
          b2 = v;
        }
      }
      near[j] = n1;
      d1[j] = b1;
      d2[j] = b2;
    }
    double best_delta = 0;
    int best_m = -1, best_h = -1;
    for (std::size_t h = 0; h < n; ++h) {
      if (is_medoid[h]) continue;
      double acc0 = 0;
      std::fill(corr.begin(), corr.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        double dh = d.values[j][h];
        double base = std::min(dh - d1[j], 0.0);
        acc0 += base;
        corr[near[j]] += (std::min(dh, d2[j]) - d1[j]) - base;
      }
      for (int mi = 0; mi < k; ++mi) {
        double delta = acc0 + corr[mi];
        if (delta < best_delta) {
          best_delta = delta;
          best_m = mi;
          best_h = static_cast<int>(h);
        }
      }
    }
    double tol = 1e-12 * (1.0 + std::abs(cost));
    if (best_m < 0 || best_delta >= -tol) break;
    std::vector<int> trial = medoids;
    is_medoid[trial[best_m]] = 0;
    trial[best_m] = best_h;
    is_medoid[best_h] = 1;
    double new_cost = total_cost(trial);
    if (!(new_cost < cost)) {  // numeric guard; undo and stop
      is_medoid[best_h] = 0;
      is_medoid[medoids[best_m]] = 1;
      break;
    }
    medoids = std::move(trial);
    cost = new_cost;
    res.cost_history.push_back(cost);
    ++swaps;
  }

  std::sort(medoids.begin(), medoids.end());
  res.k = k;
  res.medoid_ids = medoids;
  res.assignments.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double best = inf;
    int bc = 0;
    for (int mi = 0; mi < k; ++mi) {
      double v = d.values[j][medoids[mi]];
      if (v < best) {
        best = v;
        bc = mi;
      }
    }
    res.assignments[j] = bc;
  }
  res.inertia = total_cost(medoids);
  res.metric = d.metric;
  res.iterations = swaps;
  return res;
}

namespace {

void validity_common_checks(std::size_t n, const ClusteringResult& r) {
  if (r.k < 2) throw std::invalid_argument("validity: need k >= 2");
  if (static_cast<std::size_t>(r.k) >= n)
    throw std::invalid_argument("validity: CH/DB undefined for k = n");
  if (r.assignments.size() != n)
    throw std::invalid_argument("validity: assignment length mismatch");
  std::vector<std::size_t> counts(r.k, 0);
  for (int a : r.assignments) {
    if (a < 0 || a >= r.k) throw std::invalid_argument("validity: assignment out of range");
    ++counts[a];
  }
  for (int c = 0; c < r.k; ++c)
    if (counts[c] == 0) throw std::invalid_argument("validity: empty cluster");
}

// silhouette over an explicit pairwise distance matrix
double silhouette_from(const Matrix& dist, const std::vector<int>& assign, int k) {
  std::size_t n = dist.size();
  std::vector<std::size_t> counts(k, 0);
  for (int a : assign) ++counts[a];
  double total = 0;
  Series sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[assign[i]] == 1) continue;  // singleton contributes 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[assign[j]] += dist[i][j];
    double a = sums[assign[i]] / static_cast<double>(counts[assign[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == assign[i] || counts[c] == 0) continue;
      b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    }
    double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace

ValidityScores validity(const TimeSeriesCollection& c, const ClusteringResult& r) {
  std::size_t n = c.size();
  validity_common_checks(n, r);
  const Matrix& X = c.values;
  int k = r.k;

  Matrix centers = cluster_means(X, r.assignments, k);
  std::vector<std::size_t> counts(k, 0);
  for (int a : r.assignments) ++counts[a];
  Series overall(X[0].size(), 0.0);
  for (const auto& x : X)
    for (std::size_t t = 0; t < x.size(); ++t) overall[t] += x[t];
  for (double& v : overall) v /= static_cast<double>(n);

  double W = 0, B = 0;
  for (std::size_t i = 0; i < n; ++i) W += sqdist(X[i], centers[r.assignments[i]]);
  for (int cidx = 0; cidx < k; ++cidx)
    B += static_cast<double>(counts[cidx]) * sqdist(centers[cidx], overall);

  ValidityScores v;
  v.inertia = W;
  v.calinski_harabasz =
      W > 0 ? (B / (k - 1)) / (W / static_cast<double>(n - k))
            : std::numeric_limits<double>::infinity();

  Series sigma(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    sigma[r.assignments[i]] += std::sqrt(sqdist(X[i], centers[r.assignments[i]]));
  for (int cidx = 0; cidx < k; ++cidx) sigma[cidx] /= static_cast<double>(counts[cidx]);
  double db = 0;
  for (int i = 0; i < k; ++i) {
    double worst = 0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      double dij = std::sqrt(sqdist(centers[i], centers[j]));
      double num = sigma[i] + sigma[j];
      double ratio = dij > 0 ? num / dij
                             : (num > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      worst = std::max(worst, ratio);
    }
    db += worst;
  }
  v.davies_bouldin = db / static_cast<double>(k);

  Matrix dist(n, Series(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i][j] = dist[j][i] = std::sqrt(sqdist(X[i], X[j]));
  v.silhouette = silhouette_from(dist, r.assignments, k);
  return v;
}

ValidityScores validity(const DistanceMatrix& d, const ClusteringResult& r) {
  std::size_t n = d.size();
  validity_common_checks(n, r);
  if (r.medoid_ids.size() != static_cast<std::size_t>(r.k))
    throw std::invalid_argument("validity: result has no medoids");
  int k = r.k;
  std::vector<std::size_t> counts(k, 0);
  for (int a : r.assignments) ++counts[a];

  // overall center = point minimizing total squared distance (tie: lowest index)
  std::size_t overall = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += d.values[j][i] * d.values[j][i];
    if (s < best) {
      best = s;
      overall = i;
    }
  }

  double W = 0, B = 0, cost = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = d.values[i][r.medoid_ids[r.assignments[i]]];
    W += v * v;
    cost += v;
  }
  for (int cidx = 0; cidx < k; ++cidx) {
    double v = d.values[r.medoid_ids[cidx]][overall];
    B += static_cast<double>(counts[cidx]) * v * v;
  }

  ValidityScores v;
  v.inertia = cost;
  v.calinski_harabasz =
      W > 0 ? (B / (k - 1)) / (W / static_cast<double>(n - k))
            : std::numeric_limits<double>::infinity();

  Series sigma(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    sigma[r.assignments[i]] += d.values[i][r.medoid_ids[r.assignments[i]]];
  for (int cidx = 0; cidx < k; ++cidx) sigma[cidx] /= static_cast<double>(counts[cidx]);
  double db = 0;
  for (int i = 0; i < k; ++i) {
    double worst = 0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      double dij = d.values[r.medoid_ids[i]][r.medoid_ids[j]];
      double num = sigma[i] + sigma[j];
      double ratio = dij > 0 ? num / dij
                             : (num > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      worst = std::max(worst, ratio);
    }
    db += worst;
  }
  v.davies_bouldin = db / static_cast<double>(k);
  v.silhouette = silhouette_from(d.values, r.assignments, k);
  return v;
}

int suggest_k(const std::vector<int>& ks, const Series& inertias) {
  if (ks.size() != inertias.size())
    throw std::invalid_argument("suggest_k: length mismatch");
  if (ks.size() < 3) throw std::invalid_argument("suggest_k: need at least 3 points");
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (ks[i] <= ks[i - 1])
      throw std::invalid_argument("suggest_k: ks must be strictly increasing");

  std::size_t m = ks.size();
  double kmin = ks.front(), kmax = ks.back();
  double imin = *std::min_element(inertias.begin(), inertias.end());
  double imax = *std::max_element(inertias.begin(), inertias.end());
  auto nx = [&](std::size_t i) {
    return (static_cast<double>(ks[i]) - kmin) / (kmax - kmin);
  };
  auto ny = [&](std::size_t i) {
    return imax > imin ? (inertias[i] - imin) / (imax - imin) : 0.0;
  };

  double x0 = nx(0), y0 = ny(0), x1 = nx(m - 1), y1 = ny(m - 1);
  double dx = x1 - x0, dy = y1 - y0;
  double norm = std::sqrt(dx * dx + dy * dy);
  double best = -1;
  std::size_t best_i = 1;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    double cross = std::abs(dx * (ny(i) - y0) - dy * (nx(i) - x0));
    double dist = cross / norm;
    if (dist > best) {
      best = dist;
      best_i = i;
    }
  }
  return ks[best_i];
}

KPlan k_plan(int k_M) {
  if (k_M < 3) throw std::invalid_argument("k_plan: k_M must be >= 3");
  return {(k_M + 1) / 2, k_M, 2 * k_M};
}

}  // namespace tsce
