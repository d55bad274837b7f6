#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsce/common.hpp"
#include "tsce/dataset.hpp"
#include "tsce/features.hpp"
#include "tsce/neural.hpp"
#include "tsce/trees.hpp"

namespace tsce {

struct FilterResult {
  std::vector<std::size_t> kept_indices;  // into the original sample order
  std::vector<int> new_labels;            // per kept sample, dense 0..K-1
  std::vector<int> class_to_orig;         // dense class -> original cluster id
};

// Drops samples of classes with fewer than 4 members, re-indexes densely.
FilterResult filter_clusters(const std::vector<int>& labels);

// v = floor(mean class count); a uniform random subset of the single largest
// class (ties: lowest class index) is kept when it exceeds v.
std::vector<std::size_t> downsample_largest(const std::vector<int>& labels,
                                            std::uint64_t seed, int* v_out = nullptr);

// Per-class proportional split with at least one sample per class on each side.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed);

// Majority vote over the K nearest; distance ties -> lower train index, vote
// ties -> smaller summed distance among tied classes, then lower class index.
int knn_predict(const Matrix& X, const std::vector<int>& y, const Series& query,
                int K, bool use_dtw);

struct ClassTask {
  Matrix inputs;  // n x p per concat_config
  std::vector<int> labels;
  std::vector<std::string> sample_ids;
  InputConfig config = InputConfig::default_config;
  int k_before = 0, k_after = 0, v = 0;
  std::size_t time_len = 0;  // leading time-segment length of each input row
  std::vector<std::string> position_names;
  std::vector<int> class_to_orig;
};

// filter -> downsample -> feature extraction -> concat, in one step.
ClassTask make_class_task(const TimeSeriesCollection& c,
                          const std::vector<int>& clusters, InputConfig config,
                          std::uint64_t seed);

enum class ModelKind { knn, gbt, fcn };
std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct KnnParams {
  int k = 5;
  bool use_dtw = false;  // false = minkowski(p=2)
};

struct HyperParams {
  ModelKind kind = ModelKind::gbt;
  KnnParams knn;
  GbtParams gbt;
  FcnArchitecture fcn_arch;  // n_classes filled at train time
  OptParams fcn_opt;
  std::string describe() const;
};

struct TrainedModel {
  HyperParams params;
  Matrix knn_X;
  std::vector<int> knn_y;
  TreeEnsemble gbt;
  FcnModel fcn;
};

// Per-sample standardization (mean 0, population std 1; constant rows -> 0).
// Applied to FCN inputs in place of batch normalization.
Series standardize(const Series& x);

TrainedModel train_model(const Matrix& X, const std::vector<int>& y,
                         const HyperParams& hp, std::uint64_t seed);
int model_predict(const TrainedModel& m, const Series& x);

struct Metrics {
  double accuracy = 0, macro_precision = 0, macro_recall = 0, macro_f1 = 0;
};

// Macro metrics over classes present in truth; 0/0 ratios defined as 0.
Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& truth);

// Accuracy-argmax over the fixed per-model grid evaluated on this seed's
// 70-30 split; ties -> first point in grid order. Failing points recorded.
HyperParams grid_search(const ClassTask& task, ModelKind kind, std::uint64_t seed,
                        const HyperParams& base = {},
                        std::vector<std::string>* failures = nullptr);

struct EvalReport {
  std::vector<int> seeds;
  std::vector<Metrics> per_seed;
  Metrics mean, stddev;  // population std
  HyperParams best;
};

EvalReport run_eval_suite(const ClassTask& task, const HyperParams& hp,
                          const std::vector<int>& seeds = {0, 1, 2, 3, 4});

}  // namespace tsce
