#include "tsce/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace tsce {

std::string to_string(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::treeshap: return "treeshap";
    case ExplainMethod::gradientshap: return "gradientshap";
    case ExplainMethod::gradcam: return "gradcam";
    case ExplainMethod::tree_gain: return "tree_gain";
  }
  throw std::logic_error("unknown explain method");
}

ExplainMethod explain_method_from_string(const std::string& s) {
  if (s == "treeshap") return ExplainMethod::treeshap;
  if (s == "gradientshap") return ExplainMethod::gradientshap;
  if (s == "gradcam") return ExplainMethod::gradcam;
  if (s == "tree_gain") return ExplainMethod::tree_gain;
  throw std::invalid_argument("unknown explain method: " + s);
}

Series exact_shapley_game(const std::function<double(std::uint32_t)>& v, int p,
                          double* base) {
  if (p < 1 || p > 20) throw std::invalid_argument("exact_shapley_game: bad p");
  std::uint32_t full = (1u << p) - 1u;
  std::vector<double> val(static_cast<std::size_t>(full) + 1);
  for (std::uint32_t mask = 0; mask <= full; ++mask) val[mask] = v(mask);

  std::vector<double> fact(p + 1, 1.0);
  for (int i = 1; i <= p; ++i) fact[i] = fact[i - 1] * i;

  Series phi(p, 0.0);
  for (std::uint32_t mask = 0; mask <= full; ++mask) {
    int s = std::popcount(mask);
    for (int i = 0; i < p; ++i) {
      if (mask & (1u << i)) continue;
      double w = fact[s] * fact[p - s - 1] / fact[p];
      phi[i] += w * (val[mask | (1u << i)] - val[mask]);
    }
  }
  if (base) *base = val[0];
  return phi;
}

Attribution brute_force_shapley(const std::function<double(const Series&)>& f,
                                const Series& x, const Matrix& background) {
  int p = static_cast<int>(x.size());
  if (p > 12) throw std::invalid_argument("brute_force_shapley: p > 12 refused");
  if (background.empty())
    throw std::invalid_argument("brute_force_shapley: empty background");

  auto game = [&](std::uint32_t mask) {
    double total = 0;
    Series z(p);
    for (const Series& b : background) {
      for (int i = 0; i < p; ++i) z[i] = (mask & (1u << i)) ? x[i] : b[i];
      total += f(z);
    }
    return total / static_cast<double>(background.size());
  };
  Attribution a;
  a.values = exact_shapley_game(game, p, &a.base_value);
  return a;
}

double cond_exp_tree(const Tree& t, const Series& x,
                     const std::vector<char>& in_coalition) {
  // cover-weighted expectation over branches whose split feature is unknown
  std::function<double(int)> walk = [&](int node_index) -> double {
    const TreeNode& node = t.nodes[node_index];
    if (node.is_leaf()) return node.weight;
    if (in_coalition[node.feature])
      return walk(x[node.feature] < node.threshold ? node.left : node.right);
    double cl = t.nodes[node.left].cover, cr = t.nodes[node.right].cover;
    return (cl * walk(node.left) + cr * walk(node.right)) / (cl + cr);
  };
  return walk(0);
}

double ensemble_cond_margin(const TreeEnsemble& e, int cls, const Series& x,
                            const std::vector<char>& in_coalition) {
  double m = e.base_score;
  for (const auto& round : e.trees)
    m += e.params.eta * cond_exp_tree(round[cls], x, in_coalition);
  return m;
}

namespace {

struct PathElement {
  int feature_index = -1;
  double zero_fraction = 0;
  double one_fraction = 0;
  double pweight = 0;
};

void extend_path(PathElement* path, unsigned depth, double zero_fraction,
                 double one_fraction, int feature_index) {
  path[depth].feature_index = feature_index;
  path[depth].zero_fraction = zero_fraction;
  path[depth].one_fraction = one_fraction;
  path[depth].pweight = depth == 0 ? 1.0 : 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    path[i + 1].pweight +=
        one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight =
        zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, unsigned depth, unsigned index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one = path[depth].pweight;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0) {
      const double tmp = path[i].pweight;
      path[i].pweight =
          next_one * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
      next_one = tmp - path[i].pweight * zero_fraction * (depth - i) /
                           static_cast<double>(depth + 1);
    } else {
      path[i].pweight =
          path[i].pweight * (depth + 1) / (zero_fraction * (depth - i));
    }
  }
  for (unsigned i = index; i < depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, unsigned depth, unsigned index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one = path[depth].pweight;
  double total = 0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0) {
      const double tmp =
          next_one * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one = path[i].pweight -
                 tmp * zero_fraction * ((depth - i) / static_cast<double>(depth + 1));
    } else {
      total += (path[i].pweight / zero_fraction) /
               ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

void tree_shap_recurse(const Tree& tree, const Series& x, Series& phi,
                       int node_index, unsigned depth, PathElement* parent_path,
                       double parent_zero, double parent_one, int parent_feature,
                       double scale) {
  const TreeNode& node = tree.nodes[node_index];
  PathElement* path = parent_path + depth + 1;
  std::copy(parent_path, parent_path + depth + 1, path);
  extend_path(path, depth, parent_zero, parent_one, parent_feature);

  if (node.is_leaf()) {
    for (unsigned i = 1; i <= depth; ++i) {
      const double w = unwound_path_sum(path, depth, i);
      const PathElement& el = path[i];
      phi[el.feature_index] +=
          w * (el.one_fraction - el.zero_fraction) * node.weight * scale;
    }
    return;
  }

  int hot = x[node.feature] < node.threshold ? node.left : node.right;
  int cold = hot == node.left ? node.right : node.left;
  double hot_zero = tree.nodes[hot].cover / node.cover;
  double cold_zero = tree.nodes[cold].cover / node.cover;
  double incoming_zero = 1, incoming_one = 1;

  // if this feature already appears on the path, undo that split first
  unsigned path_index = 0;
  for (; path_index <= depth; ++path_index)
    if (path[path_index].feature_index == node.feature) break;
  if (path_index != depth + 1) {
    incoming_zero = path[path_index].zero_fraction;
    incoming_one = path[path_index].one_fraction;
    unwind_path(path, depth, path_index);
    depth -= 1;
  }

  tree_shap_recurse(tree, x, phi, hot, depth + 1, path, hot_zero * incoming_zero,
                    incoming_one, node.feature, scale);
  tree_shap_recurse(tree, x, phi, cold, depth + 1, path, cold_zero * incoming_zero,
                    0.0, node.feature, scale);
}

int tree_depth(const Tree& t, int node_index = 0) {
  const TreeNode& n = t.nodes[node_index];
  if (n.is_leaf()) return 0;
  return 1 + std::max(tree_depth(t, n.left), tree_depth(t, n.right));
}

double tree_expected(const Tree& t, int node_index = 0) {
  const TreeNode& n = t.nodes[node_index];
  if (n.is_leaf()) return n.weight;
  double cl = t.nodes[n.left].cover, cr = t.nodes[n.right].cover;
  return (cl * tree_expected(t, n.left) + cr * tree_expected(t, n.right)) / (cl + cr);
}

}  // namespace

Attribution treeshap(const TreeEnsemble& e, const Series& x, int class_index) {
  if (class_index < 0 || class_index >= e.n_classes)
    throw std::invalid_argument("treeshap: class out of range");
  if (x.size() != e.n_features)
    throw std::invalid_argument("treeshap: dimension mismatch");
  Attribution a;
  a.class_index = class_index;
  a.values.assign(e.n_features, 0.0);
  a.base_value = e.base_score;
  for (const auto& round : e.trees) {
    const Tree& tree = round[class_index];
    for (const auto& node : tree.nodes)
      if (!(node.cover > 0))
        throw std::runtime_error("treeshap: ensemble is missing positive covers");
    int maxd = tree_depth(tree);
    std::vector<PathElement> buf(
        static_cast<std::size_t>(maxd + 2) * (maxd + 3) / 2);
    tree_shap_recurse(tree, x, a.values, 0, 0, buf.data(), 1.0, 1.0, -1,
                      e.params.eta);
    a.base_value += e.params.eta * tree_expected(tree);
  }
  return a;
}

Attribution gradient_shap(const FcnModel& m, const Series& x, const Matrix& background,
                          int class_index, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("gradient_shap: n_samples < 1");
  if (background.empty())
    throw std::invalid_argument("gradient_shap: empty background");
  std::size_t L = x.size();
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::uniform_int_distribution<std::size_t> pick(0, background.size() - 1);
  std::uniform_real_distribution<double> uu(0.0, 1.0);

  Attribution a;
  a.class_index = class_index;
  a.values.assign(L, 0.0);
  Series z(L);
  for (int s = 0; s < n_samples; ++s) {
    const Series& b = background[pick(rng)];
    double u = uu(rng);
    for (std::size_t i = 0; i < L; ++i) z[i] = b[i] + u * (x[i] - b[i]);
    Series grad = class_input_gradient(m, z, class_index);
    for (std::size_t i = 0; i < L; ++i) a.values[i] += (x[i] - b[i]) * grad[i];
  }
  for (double& v : a.values) v /= static_cast<double>(n_samples);

  double base = 0;
  FcnActivations act;
  for (const Series& b : background) {
    fcn_forward(m, b, act);
    base += act.logits[class_index];
  }
  a.base_value = base / static_cast<double>(background.size());
  return a;
}

Series cam_combine(const Matrix& activations, const Matrix& grads) {
  std::size_t C = activations.size();
  std::size_t L = activations.empty() ? 0 : activations[0].size();
  Series map(L, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double alpha = 0;
    for (double g : grads[c]) alpha += g;
    alpha /= static_cast<double>(L);
    for (std::size_t t = 0; t < L; ++t) map[t] += alpha * activations[c][t];
  }
  for (double& v : map) v = v > 0 ? v : 0.0;
  return map;
}

Attribution grad_cam(const FcnModel& m, const Series& x, int class_index) {
  if (m.convs.empty()) throw std::invalid_argument("grad_cam: model has no conv layer");
  FcnActivations act;
  fcn_forward(m, x, act);
  Matrix dA = logit_grad_last_conv(m, x, class_index);
  Attribution a;
  a.class_index = class_index;
  a.values = cam_combine(act.post.back(), dA);
  a.base_value = 0;
  return a;
}

Series aggregate_global(const std::vector<Attribution>& attrs) {
  if (attrs.empty()) throw std::invalid_argument("aggregate_global: no attributions");
  std::size_t p = attrs[0].values.size();
  Series out(p, 0.0);
  for (const auto& a : attrs) {
    if (a.values.size() != p)
      throw std::invalid_argument("aggregate_global: mixed attribution lengths");
    for (std::size_t i = 0; i < p; ++i) out[i] += std::abs(a.values[i]);
  }
  for (double& v : out) v /= static_cast<double>(attrs.size());
  return out;
}

ClusterAgg aggregate_cluster(const std::vector<Attribution>& attrs,
                             const std::vector<int>& cluster_labels, int cluster) {
  if (attrs.size() != cluster_labels.size())
    throw std::invalid_argument("aggregate_cluster: label length mismatch");
  ClusterAgg agg;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (cluster_labels[i] != cluster) continue;
    Series abs = attrs[i].values;
    for (double& v : abs) v = std::abs(v);
    agg.member_abs.push_back(std::move(abs));
  }
  if (agg.member_abs.empty())
    throw std::invalid_argument("aggregate_cluster: empty cluster");
  std::size_t p = agg.member_abs[0].size();
  agg.mean.assign(p, 0.0);
  for (const auto& row : agg.member_abs)
    for (std::size_t i = 0; i < p; ++i) agg.mean[i] += row[i];
  for (double& v : agg.mean) v /= static_cast<double>(agg.member_abs.size());
  return agg;
}

Series window_means(const Series& values, int window) {
  if (window < 1) throw std::invalid_argument("window_means: window must be >= 1");
  Series out;
  std::size_t n = values.size();
  for (std::size_t start = 0; start < n; start += window) {
    std::size_t stop = std::min(n, start + window);
    double s = 0;
    for (std::size_t i = start; i < stop; ++i) s += values[i];
    out.push_back(s / static_cast<double>(stop - start));
  }
  return out;
}

Series window_average(const Series& values, int window) {
  Series means = window_means(values, window);
  Series out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = means[i / window];
  return out;
}

namespace {

// average ranks (1-based) with ties sharing the mean rank
Series average_ranks(const Series& v) {
  std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Series ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

std::set<std::size_t> topk_indices(const Series& v, int k) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  return std::set<std::size_t>(order.begin(), order.begin() + k);
}

}  // namespace

RankAgreement rank_agreement(const Series& a, const Series& b, int k) {
  if (a.size() != b.size()) throw std::invalid_argument("rank_agreement: length mismatch");
  std::size_t p = a.size();
  if (p < 2) throw std::invalid_argument("rank_agreement: need p >= 2");
  if (k < 1 || static_cast<std::size_t>(k) > p)
    throw std::invalid_argument("rank_agreement: bad k");

  RankAgreement out;
  bool const_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
  bool const_b = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
  if (const_a || const_b) {
    out.spearman = 0;
    out.spearman_defined = false;
  } else {
    Series ra = average_ranks(a), rb = average_ranks(b);
    double ma = mean_of(ra), mb = mean_of(rb);
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < p; ++i) {
      num += (ra[i] - ma) * (rb[i] - mb);
      va += (ra[i] - ma) * (ra[i] - ma);
      vb += (rb[i] - mb) * (rb[i] - mb);
    }
    out.spearman = num / std::sqrt(va * vb);
  }

  auto ta = topk_indices(a, k), tb = topk_indices(b, k);
  std::size_t inter = 0;
  for (std::size_t i : ta) inter += tb.count(i);
  std::size_t uni = ta.size() + tb.size() - inter;
  out.topk_jaccard = static_cast<double>(inter) / static_cast<double>(uni);
  return out;
}

ExplanationSet build_explanation_set(ExplainMethod method,
                                     std::vector<Attribution> samples,
                                     const std::vector<int>& cluster_labels,
                                     std::size_t time_len, int window) {
  ExplanationSet set;
  set.method = method;
  set.samples = std::move(samples);
  if (set.samples.empty())
    throw std::invalid_argument("build_explanation_set: no attributions");
  set.global = aggregate_global(set.samples);

  std::set<int> clusters(cluster_labels.begin(), cluster_labels.end());
  for (int c : clusters)
    set.per_cluster[c] = aggregate_cluster(set.samples, cluster_labels, c).mean;

  if (window > 0 && time_len > 0) {
    set.window = window;
    Series head(set.global.begin(), set.global.begin() + time_len);
    set.windowed_global = window_means(head, window);
    for (auto& [c, vec] : set.per_cluster) {
      Series chead(vec.begin(), vec.begin() + time_len);
      set.windowed_per_cluster[c] = window_means(chead, window);
    }
  }
  return set;
}

}  // namespace tsce
