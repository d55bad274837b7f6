#pragma once

#include <cstdint>
#include <vector>

#include "tsce/common.hpp"
#include "tsce/dataset.hpp"
#include "tsce/distance.hpp"

namespace tsce {

struct ClusteringResult {
  int k = 0;
  std::vector<int> assignments;  // per-series cluster index in [0,k)
  Matrix centers;                // k-means: k x T cluster means
  std::vector<int> medoid_ids;   // k-medoids: k row indices
  double inertia = 0;            // k-means: WCSS; k-medoids: total cost
  Metric metric;
  int iterations = 0;
  Series cost_history;  // k-means: WCSS per Lloyd iteration; PAM: cost per accepted swap
};

struct ValidityScores {
  double silhouette = 0;
  double calinski_harabasz = 0;
  double davies_bouldin = 0;
  double inertia = 0;
};

struct KPlan {
  int k_L = 0, k_M = 0, k_H = 0;
};

// k-means++ seeding, Lloyd iterations until assignments stabilize; empty
// clusters repaired by seizing the point farthest from its assigned center.
ClusteringResult kmeans_fit(const TimeSeriesCollection& c, int k, std::uint64_t seed,
                            int max_iter = 300);

// PAM over an arbitrary dissimilarity matrix: greedy BUILD then best-improvement
// SWAP until no improving swap exists. Fully deterministic; seed kept for
// signature parity with kmeans_fit.
ClusteringResult pam_fit(const DistanceMatrix& d, int k, std::uint64_t seed = 0);

// Euclidean-centroid form (k-means results).
ValidityScores validity(const TimeSeriesCollection& c, const ClusteringResult& r);
// Metric-generalized form (k-medoids results): medoids as centers, supplied metric.
ValidityScores validity(const DistanceMatrix& d, const ClusteringResult& r);

// Elbow rule: min-max normalize both axes, maximize perpendicular distance to
// the chord joining the curve endpoints; ties toward the smaller k.
int suggest_k(const std::vector<int>& ks, const Series& inertias);

// (round-half-up(k_M/2), k_M, 2*k_M)
KPlan k_plan(int k_M);

}  // namespace tsce
