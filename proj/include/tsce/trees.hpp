#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsce/common.hpp"

namespace tsce {

// Flat node store; node 0 is the root. feature < 0 marks a leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0;
  int left = -1, right = -1;
  double weight = 0;  // leaf value
  double cover = 0;   // sum of hessians reaching the node
  double gain = 0;    // split gain (split nodes only)
  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;
  double output(const Series& x) const;
};

struct GbtParams {
  double eta = 0.3;
  int rounds = 100;
  double lambda = 1.0;
  double gamma = 0.0;
  int max_depth = 6;
};

struct TreeEnsemble {
  int n_classes = 0;
  std::size_t n_features = 0;
  GbtParams params;
  double base_score = 0;
  std::vector<std::vector<Tree>> trees;  // [round][class]
  Series train_loss;                     // mean cross-entropy after each round

  double margin(const Series& x, int cls) const;
  Series margins(const Series& x) const;
};

void softmax_inplace(Series& v);

// p = softmax(margins); g_k = p_k - [k=y]; h_k = p_k (1 - p_k)
void softmax_grad_hess(const Series& margins, int y, Series& g, Series& h);

double split_gain(double GL, double HL, double GR, double HR, double lambda,
                  double gamma);

// Exact greedy second-order boosting; deterministic (no subsampling), the
// seed is kept for interface uniformity.
TreeEnsemble fit_gbt(const Matrix& X, const std::vector<int>& y,
                     const GbtParams& params, std::uint64_t seed = 0);

Series predict_proba(const TreeEnsemble& e, const Series& x);
int predict_class(const TreeEnsemble& e, const Series& x);

// Mean split gain per feature over all trees; unused features get 0.
Series gain_importance(const TreeEnsemble& e);

void save_gbt_json(const TreeEnsemble& e, const std::string& path);
TreeEnsemble load_gbt_json(const std::string& path);

}  // namespace tsce
