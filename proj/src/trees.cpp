#include "tsce/trees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

namespace tsce {

double Tree::output(const Series& x) const {
  int i = 0;
  while (!nodes[i].is_leaf())
    i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].weight;
}

double TreeEnsemble::margin(const Series& x, int cls) const {
  double m = base_score;
  for (const auto& round : trees) m += params.eta * round[cls].output(x);
  return m;
}

Series TreeEnsemble::margins(const Series& x) const {
  Series m(n_classes);
  for (int k = 0; k < n_classes; ++k) m[k] = margin(x, k);
  return m;
}

void softmax_inplace(Series& v) {
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void softmax_grad_hess(const Series& margins, int y, Series& g, Series& h) {
  if (y < 0 || static_cast<std::size_t>(y) >= margins.size())
    throw std::invalid_argument("softmax_grad_hess: label out of range");
  Series p = margins;
  softmax_inplace(p);
  g.resize(p.size());
  h.resize(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    g[k] = p[k] - (static_cast<int>(k) == y ? 1.0 : 0.0);
    h[k] = p[k] * (1.0 - p[k]);
  }
}

double split_gain(double GL, double HL, double GR, double HR, double lambda,
                  double gamma) {
  double total = GL + GR;
  return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) -
                total * total / (HL + HR + lambda)) -
         gamma;
}

namespace {

struct TreeBuilder {
  const Matrix& X;
  const Series& g;
  const Series& h;
  const GbtParams& p;
  std::vector<TreeNode> nodes;

  int build(std::vector<std::size_t>& idx, int depth) {
    double G = 0, H = 0;
    for (std::size_t i : idx) {
      G += g[i];
      H += h[i];
    }
    int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[me].cover = H;
    nodes[me].weight = -G / (H + p.lambda);

    if (depth >= p.max_depth || idx.size() < 2) return me;

    double best_gain = 0;
    int best_f = -1;
    double best_thr = 0;
    std::size_t n_feat = X[0].size();
    std::vector<std::pair<double, std::size_t>> order(idx.size());
    for (std::size_t f = 0; f < n_feat; ++f) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        order[i] = {X[idx[i]][f], idx[i]};
      std::sort(order.begin(), order.end());
      double GL = 0, HL = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        GL += g[order[i].second];
        HL += h[order[i].second];
        double a = order[i].first, b = order[i + 1].first;
        if (a == b) continue;
        double gain = split_gain(GL, HL, G - GL, H - HL, p.lambda, p.gamma);
        if (gain > best_gain) {
          double thr = (a + b) / 2.0;
          if (!(thr > a)) thr = b;  // keep both children non-empty
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_thr = thr;
        }
      }
    }
    if (best_f < 0) return me;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx)
      (X[i][best_f] < best_thr ? left : right).push_back(i);
    nodes[me].feature = best_f;
    nodes[me].threshold = best_thr;
    nodes[me].gain = best_gain;
    int l = build(left, depth + 1);
    int r = build(right, depth + 1);
    nodes[me].left = l;
    nodes[me].right = r;
    return me;
  }
};

}  // namespace

TreeEnsemble fit_gbt(const Matrix& X, const std::vector<int>& y,
                     const GbtParams& params, std::uint64_t /*seed*/) {
  std::size_t n = X.size();
  if (n == 0 || y.size() != n) throw std::invalid_argument("fit_gbt: bad input sizes");
  std::size_t n_feat = X[0].size();
  if (n_feat < 1) throw std::invalid_argument("fit_gbt: need at least one feature");
  int K = 0;
  std::set<int> classes;
  for (int label : y) {
    if (label < 0) throw std::invalid_argument("fit_gbt: negative label");
    classes.insert(label);
    K = std::max(K, label + 1);
  }
  if (classes.size() < 2) throw std::invalid_argument("fit_gbt: need >= 2 classes");
  for (const auto& row : X) {
    if (row.size() != n_feat) throw std::invalid_argument("fit_gbt: ragged inputs");
    for (double v : row)
      if (std::isnan(v)) throw std::invalid_argument("fit_gbt: NaN input");
  }

  TreeEnsemble e;
  e.n_classes = K;
  e.n_features = n_feat;
  e.params = params;
  e.base_score = 0;

  Matrix margins(n, Series(K, 0.0));
  Matrix g(n), h(n);
  Series gk(n), hk(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) softmax_grad_hess(margins[i], y[i], g[i], h[i]);
    std::vector<Tree> round_trees(K);
    for (int k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        gk[i] = g[i][k];
        hk[i] = h[i][k];
      }
      TreeBuilder builder{X, gk, hk, params, {}};
      std::vector<std::size_t> idx = all;
      builder.build(idx, 0);
      round_trees[k].nodes = std::move(builder.nodes);
      for (std::size_t i = 0; i < n; ++i)
        margins[i][k] += params.eta * round_trees[k].output(X[i]);
    }
    e.trees.push_back(std::move(round_trees));

    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = *std::max_element(margins[i].begin(), margins[i].end());
      double lse = 0;
      for (double v : margins[i]) lse += std::exp(v - mx);
      loss += std::log(lse) + mx - margins[i][y[i]];
    }
    e.train_loss.push_back(loss / static_cast<double>(n));
  }
  return e;
}

Series predict_proba(const TreeEnsemble& e, const Series& x) {
  if (x.size() != e.n_features)
    throw std::invalid_argument("predict_proba: dimension mismatch");
  Series m = e.margins(x);
  softmax_inplace(m);
  return m;
}

int predict_class(const TreeEnsemble& e, const Series& x) {
  Series p = predict_proba(e, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Series gain_importance(const TreeEnsemble& e) {
  Series total(e.n_features, 0.0);
  std::vector<std::size_t> count(e.n_features, 0);
  for (const auto& round : e.trees)
    for (const auto& tree : round)
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        total[node.feature] += node.gain;
        ++count[node.feature];
      }
  for (std::size_t f = 0; f < e.n_features; ++f)
    if (count[f] > 0) total[f] /= static_cast<double>(count[f]);
  return total;
}

void save_gbt_json(const TreeEnsemble& e, const std::string& path) {
  nlohmann::json j;
  j["model"] = "gbt";
  j["n_classes"] = e.n_classes;
  j["n_features"] = e.n_features;
  j["base_score"] = e.base_score;
  j["eta"] = e.params.eta;
  j["rounds"] = e.params.rounds;
  j["lambda"] = e.params.lambda;
  j["gamma"] = e.params.gamma;
  j["max_depth"] = e.params.max_depth;
  j["train_loss"] = e.train_loss;
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& round : e.trees) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& tree : round) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& nd : tree.nodes)
        nodes.push_back({{"f", nd.feature},
                         {"thr", nd.threshold},
                         {"l", nd.left},
                         {"r", nd.right},
                         {"w", nd.weight},
                         {"cover", nd.cover},
                         {"gain", nd.gain}});
      per_class.push_back({{"nodes", nodes}});
    }
    rounds.push_back(per_class);
  }
  j["trees"] = rounds;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_gbt_json: cannot open " + path);
  out << j.dump(1) << "\n";
}

TreeEnsemble load_gbt_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_gbt_json: cannot open " + path);
  nlohmann::json j;
  in >> j;
  TreeEnsemble e;
  e.n_classes = j.at("n_classes").get<int>();
  e.n_features = j.at("n_features").get<std::size_t>();
  e.base_score = j.at("base_score").get<double>();
  e.params.eta = j.at("eta").get<double>();
  e.params.rounds = j.at("rounds").get<int>();
  e.params.lambda = j.at("lambda").get<double>();
  e.params.gamma = j.at("gamma").get<double>();
  e.params.max_depth = j.at("max_depth").get<int>();
  e.train_loss = j.at("train_loss").get<Series>();
  for (const auto& round : j.at("trees")) {
    std::vector<Tree> per_class;
    for (const auto& tj : round) {
      Tree t;
      for (const auto& nj : tj.at("nodes")) {
        TreeNode nd;
        nd.feature = nj.at("f").get<int>();
        nd.threshold = nj.at("thr").get<double>();
        nd.left = nj.at("l").get<int>();
        nd.right = nj.at("r").get<int>();
        nd.weight = nj.at("w").get<double>();
        nd.cover = nj.at("cover").get<double>();
        nd.gain = nj.at("gain").get<double>();
        t.nodes.push_back(nd);
      }
      per_class.push_back(std::move(t));
    }
    e.trees.push_back(std::move(per_class));
  }
  return e;
}

}  // namespace tsce
