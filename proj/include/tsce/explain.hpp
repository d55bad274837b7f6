#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tsce/common.hpp"
#include "tsce/neural.hpp"
#include "tsce/trees.hpp"

namespace tsce {

struct Attribution {
  std::string sample_id;
  int class_index = 0;
  Series values;           // aligned with the concatenated input positions
  double base_value = 0;   // expected model output (method-specific)
};

enum class ExplainMethod { treeshap, gradientshap, gradcam, tree_gain };

std::string to_string(ExplainMethod m);
ExplainMethod explain_method_from_string(const std::string& s);

struct ExplanationSet {
  ExplainMethod method = ExplainMethod::treeshap;
  std::vector<Attribution> samples;
  Series global;                    // mean |values| over samples
  std::map<int, Series> per_cluster;
  int window = 0;                   // 0 = no windowed variant
  Series windowed_global;           // per-window means over the time segment
  std::map<int, Series> windowed_per_cluster;
};

// Exact Shapley values of the game v over p players (p <= 20 by mask width;
// callers keep p small). Returns phi; v(0) goes to *base when given.
Series exact_shapley_game(const std::function<double(std::uint32_t)>& v, int p,
                          double* base = nullptr);

// Exact Shapley attribution where coalition S evaluates to the mean over
// background rows b of f(x restricted to S, b elsewhere). Refuses p > 12.
Attribution brute_force_shapley(const std::function<double(const Series&)>& f,
                                const Series& x, const Matrix& background);

// Cover-weighted conditional expectation of one tree / the class margin when
// only coalition features are known (the missingness semantics TreeSHAP uses).
double cond_exp_tree(const Tree& t, const Series& x,
                     const std::vector<char>& in_coalition);
double ensemble_cond_margin(const TreeEnsemble& e, int cls, const Series& x,
                            const std::vector<char>& in_coalition);

// Path-dependent TreeSHAP on the pre-softmax margin of one class.
Attribution treeshap(const TreeEnsemble& e, const Series& x, int class_index);

// Expected-gradients approximation of SHAP on the class logit.
Attribution gradient_shap(const FcnModel& m, const Series& x, const Matrix& background,
                          int class_index, int n_samples = 200,
                          std::uint64_t seed = 0);

// map_t = ReLU(sum_c alpha_c A_c,t) with alpha = time-mean of dlogit/dA.
Attribution grad_cam(const FcnModel& m, const Series& x, int class_index);
Series cam_combine(const Matrix& activations, const Matrix& grads);

// Mean over samples of |values| (absolute first, then mean).
Series aggregate_global(const std::vector<Attribution>& attrs);

struct ClusterAgg {
  Matrix member_abs;  // |values| per member, input order preserved
  Series mean;
};
ClusterAgg aggregate_cluster(const std::vector<Attribution>& attrs,
                             const std::vector<int>& cluster_labels, int cluster);

// Disjoint windows [0,w),[w,2w),...; each position reported as its window
// mean; the final short window uses its actual length.
Series window_average(const Series& values, int window = 5);
// Compact form: one mean per window, length ceil(|values|/window).
Series window_means(const Series& values, int window = 5);

struct RankAgreement {
  double spearman = 0;
  double topk_jaccard = 0;
  bool spearman_defined = true;  // false when an input vector is constant
};
RankAgreement rank_agreement(const Series& a, const Series& b, int k);

// Assembles global / per-cluster / windowed aggregates from attributions.
ExplanationSet build_explanation_set(ExplainMethod method,
                                     std::vector<Attribution> samples,
                                     const std::vector<int>& cluster_labels,
                                     std::size_t time_len, int window);

}  // namespace tsce
