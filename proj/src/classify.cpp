#include "tsce/classify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tsce/distance.hpp"

namespace tsce {

FilterResult filter_clusters(const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("filter_clusters: empty labels");
  std::map<int, std::size_t> counts;
  for (int c : labels) ++counts[c];
  std::map<int, int> dense;
  FilterResult out;
  for (const auto& [orig, cnt] : counts) {
    if (cnt >= 4) {
      dense[orig] = static_cast<int>(out.class_to_orig.size());
      out.class_to_orig.push_back(orig);
    }
  }
  if (out.class_to_orig.size() < 2)
    throw std::runtime_error("filter_clusters: fewer than 2 classes with at least 4 members");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = dense.find(labels[i]);
    if (it == dense.end()) continue;
    out.kept_indices.push_back(i);
    out.new_labels.push_back(it->second);
  }
  return out;
}

std::vector<std::size_t> downsample_largest(const std::vector<int>& labels,
                                            std::uint64_t seed, int* v_out) {
  if (labels.empty()) throw std::invalid_argument("downsample_largest: empty labels");
  int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::invalid_argument("downsample_largest: negative label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (const auto& cls : by_class)
    if (cls.empty()) throw std::invalid_argument("downsample_largest: labels not dense");
  int v = static_cast<int>(labels.size() / static_cast<std::size_t>(k));
  if (v_out) *v_out = v;
  std::size_t largest = 0;
  for (std::size_t c = 1; c < by_class.size(); ++c)
    if (by_class[c].size() > by_class[largest].size()) largest = c;
  std::vector<std::size_t> kept;
  if (by_class[largest].size() > static_cast<std::size_t>(v)) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed & 0xffffffffull));
    std::vector<std::size_t> pool = by_class[largest];
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(v));
    std::set<std::size_t> keep_set(pool.begin(), pool.end());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) == largest) {
        if (keep_set.count(i)) kept.push_back(i);
      } else {
        kept.push_back(i);
      }
    }
  } else {
    kept.resize(labels.size());
    std::iota(kept.begin(), kept.end(), std::size_t{0});
  }
  return kept;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("stratified_split: empty labels");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("stratified_split: test_fraction must be in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937 rng(static_cast<std::uint32_t>(seed & 0xffffffffull));
  std::vector<std::size_t> train, test;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2)
      throw std::runtime_error("stratified_split: class " + std::to_string(cls) +
                               " has fewer than 2 samples");
    auto n_test = static_cast<std::size_t>(std::llround(
        static_cast<double>(idx.size()) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < idx.size(); ++j)
      (j < n_test ? test : train).push_back(idx[j]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

int knn_predict(const Matrix& X, const std::vector<int>& y, const Series& query,
                int K, bool use_dtw) {
  if (X.empty() || X.size() != y.size())
    throw std::invalid_argument("knn_predict: bad training data");
  if (K < 1 || static_cast<std::size_t>(K) > X.size())
    throw std::invalid_argument("knn_predict: K out of range");
  std::vector<std::pair<double, std::size_t>> dist(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    double d = use_dtw ? dtw(X[i], query, std::nullopt) : euclidean(X[i], query);
    dist[i] = {d, i};
  }
  std::sort(dist.begin(), dist.end());  // distance ties -> lower train index
  std::map<int, std::pair<int, double>> votes;  // class -> (count, summed distance)
  for (int j = 0; j < K; ++j) {
    auto& v = votes[y[dist[static_cast<std::size_t>(j)].second]];
    v.first += 1;
    v.second += dist[static_cast<std::size_t>(j)].first;
  }
  int best_class = -1, best_count = -1;
  double best_sum = 0.0;
  for (const auto& [cls, v] : votes) {
    bool better = v.first > best_count ||
                  (v.first == best_count && v.second < best_sum);
    if (better) {
      best_class = cls;
      best_count = v.first;
      best_sum = v.second;
    }
  }
  return best_class;
}

ClassTask make_class_task(const TimeSeriesCollection& c,
                          const std::vector<int>& clusters, InputConfig config,
                          std::uint64_t seed) {
  if (clusters.size() != c.size())
    throw std::invalid_argument("make_class_task: cluster labels do not match collection");
  if (!c.fully_observed())
    throw std::invalid_argument("make_class_task: collection has missing values");
  std::set<int> distinct(clusters.begin(), clusters.end());

  FilterResult fr = filter_clusters(clusters);
  ClassTask task;
  std::vector<std::size_t> sub = downsample_largest(fr.new_labels, seed, &task.v);
  task.config = config;
  task.k_before = static_cast<int>(distinct.size());
  task.k_after = static_cast<int>(fr.class_to_orig.size());
  task.class_to_orig = fr.class_to_orig;
  std::vector<int> post_labels;
  std::vector<std::size_t> rows;
  for (std::size_t s : sub) {
    rows.push_back(fr.kept_indices[s]);
    post_labels.push_back(fr.new_labels[s]);
  }
  task.labels = post_labels;
  std::size_t t_len = c.length();
  task.time_len = time_segment_length(t_len, config);
  task.position_names = input_position_names(t_len, config);
  bool needs_features = config != InputConfig::default_config;
  for (std::size_t r : rows) {
    task.sample_ids.push_back(c.ids[r]);
    FeatureVector f;
    if (needs_features) f = extract_features(c.values[r]);
    task.inputs.push_back(concat_config(c.values[r], f, config));
  }
  return task;
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::knn: return "knn";
    case ModelKind::gbt: return "xgboost";
    case ModelKind::fcn: return "fcn";
  }
  throw std::logic_error("to_string: bad ModelKind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "knn") return ModelKind::knn;
  if (s == "xgboost" || s == "gbt") return ModelKind::gbt;
  if (s == "fcn") return ModelKind::fcn;
  throw std::invalid_argument("unknown model kind: " + s);
}

std::string HyperParams::describe() const {
  std::ostringstream os;
  switch (kind) {
    case ModelKind::knn:
      os << "knn(k=" << knn.k << ";metric=" << (knn.use_dtw ? "dtw" : "minkowski") << ")";
      break;
    case ModelKind::gbt:
      os << "xgboost(gamma=" << format_double(gbt.gamma)
         << ";max_depth=" << gbt.max_depth << ";eta=" << format_double(gbt.eta)
         << ";rounds=" << gbt.rounds << ")";
      break;
    case ModelKind::fcn:
      os << "fcn(layers=" << fcn_arch.n_layers << ";filters=" << fcn_arch.first_filters
         << ";opt=" << (fcn_opt.adam ? "adam" : "sgd")
         << ";lr=" << format_double(fcn_opt.lr) << ";epochs=" << fcn_opt.epochs << ")";
      break;
  }
  return os.str();
}

Series standardize(const Series& x) {
  if (x.empty()) return x;
  double m = mean_of(x);
  double sd = std::sqrt(variance_pop(x));
  Series out(x.size(), 0.0);
  if (sd > 0.0)
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - m) / sd;
  return out;
}

TrainedModel train_model(const Matrix& X, const std::vector<int>& y,
                         const HyperParams& hp, std::uint64_t seed) {
  TrainedModel m;
  m.params = hp;
  switch (hp.kind) {
    case ModelKind::knn:
      m.knn_X = X;
      m.knn_y = y;
      if (hp.knn.k < 1 || static_cast<std::size_t>(hp.knn.k) > X.size())
        throw std::invalid_argument("train_model: knn k out of range for training set");
      break;
    case ModelKind::gbt:
      m.gbt = fit_gbt(X, y, hp.gbt, seed);
      break;
    case ModelKind::fcn: {
      Matrix Xs(X.size());
      for (std::size_t i = 0; i < X.size(); ++i) Xs[i] = standardize(X[i]);
      FcnArchitecture arch = hp.fcn_arch;
      arch.n_classes = *std::max_element(y.begin(), y.end()) + 1;
      m.fcn = fit_fcn(Xs, y, arch, hp.fcn_opt, seed);
      break;
    }
  }
  return m;
}

int model_predict(const TrainedModel& m, const Series& x) {
  switch (m.params.kind) {
    case ModelKind::knn:
      return knn_predict(m.knn_X, m.knn_y, x, m.params.knn.k, m.params.knn.use_dtw);
    case ModelKind::gbt:
      return predict_class(m.gbt, x);
    case ModelKind::fcn:
      return fcn_predict_class(m.fcn, standardize(x));
  }
  throw std::logic_error("model_predict: bad ModelKind");
}

Metrics evaluate(const std::vector<int>& predictions, const std::vector<int>& truth) {
  if (predictions.size() != truth.size() || truth.empty())
    throw std::invalid_argument("evaluate: size mismatch or empty");
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predictions[i] == truth[i]) ++correct;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  std::set<int> classes(truth.begin(), truth.end());
  double sp = 0, sr = 0, sf = 0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (predictions[i] == c && truth[i] == c) ++tp;
      if (predictions[i] == c && truth[i] != c) ++fp;
      if (predictions[i] != c && truth[i] == c) ++fn;
    }
    double prec = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    double rec = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    sp += prec;
    sr += rec;
    sf += f1;
  }
  auto nc = static_cast<double>(classes.size());
  m.macro_precision = sp / nc;
  m.macro_recall = sr / nc;
  m.macro_f1 = sf / nc;
  return m;
}

namespace {

std::vector<HyperParams> grid_points(ModelKind kind, const HyperParams& base) {
  std::vector<HyperParams> pts;
  HyperParams hp = base;
  hp.kind = kind;
  switch (kind) {
    case ModelKind::knn:
      for (int k : {5, 10, 15})
        for (bool dtw : {false, true}) {
          hp.knn.k = k;
          hp.knn.use_dtw = dtw;
          pts.push_back(hp);
        }
      break;
    case ModelKind::gbt:
      for (double gamma : {0.0, 1.0, 2.0})
        for (int depth : {3, 6, 9}) {
          hp.gbt.gamma = gamma;
          hp.gbt.max_depth = depth;
          pts.push_back(hp);
        }
      break;
    case ModelKind::fcn:
      for (bool adam : {true, false})
        for (double lr : {0.01, 0.001, 0.0001})
          for (int layers : {1, 2, 3, 4})
            for (int filters : {4, 16, 64, 128}) {
              hp.fcn_opt.adam = adam;
              hp.fcn_opt.lr = lr;
              hp.fcn_arch.n_layers = layers;
              hp.fcn_arch.first_filters = filters;
              pts.push_back(hp);
            }
      break;
  }
  return pts;
}

}  // namespace

HyperParams grid_search(const ClassTask& task, ModelKind kind, std::uint64_t seed,
                        const HyperParams& base, std::vector<std::string>* failures) {
  auto [train_idx, test_idx] = stratified_split(task.labels, 0.3, seed);
  Matrix Xtr, Xte;
  std::vector<int> ytr, yte;
  for (std::size_t i : train_idx) {
    Xtr.push_back(task.inputs[i]);
    ytr.push_back(task.labels[i]);
  }
  for (std::size_t i : test_idx) {
    Xte.push_back(task.inputs[i]);
    yte.push_back(task.labels[i]);
  }
  std::vector<HyperParams> pts = grid_points(kind, base);
  bool have_best = false;
  HyperParams best;
  double best_acc = -1.0;
  for (const auto& hp : pts) {
    try {
      TrainedModel m = train_model(Xtr, ytr, hp, seed);
      std::vector<int> pred;
      pred.reserve(Xte.size());
      for (const auto& x : Xte) pred.push_back(model_predict(m, x));
      double acc = evaluate(pred, yte).accuracy;
      if (acc > best_acc) {
        best_acc = acc;
        best = hp;
        have_best = true;
      }
    } catch (const std::exception& e) {
      if (failures) failures->push_back(hp.describe() + ": " + e.what());
    }
  }
  if (!have_best) throw std::runtime_error("grid_search: every grid point failed");
  return best;
}

EvalReport run_eval_suite(const ClassTask& task, const HyperParams& hp,
                          const std::vector<int>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("run_eval_suite: no seeds");
  EvalReport rep;
  rep.seeds = seeds;
  rep.best = hp;
  for (int s : seeds) {
    auto [train_idx, test_idx] =
        stratified_split(task.labels, 0.3, static_cast<std::uint64_t>(s));
    Matrix Xtr;
    std::vector<int> ytr;
    for (std::size_t i : train_idx) {
      Xtr.push_back(task.inputs[i]);
      ytr.push_back(task.labels[i]);
    }
    TrainedModel m = train_model(Xtr, ytr, hp, static_cast<std::uint64_t>(s));
    std::vector<int> pred, truth;
    for (std::size_t i : test_idx) {
      pred.push_back(model_predict(m, task.inputs[i]));
      truth.push_back(task.labels[i]);
    }
    rep.per_seed.push_back(evaluate(pred, truth));
  }
  auto collect = [&](auto getter) {
    Series vals;
    for (const auto& me : rep.per_seed) vals.push_back(getter(me));
    return vals;
  };
  auto finish = [&](auto getter, double Metrics::* mf, double Metrics::* sf) {
    Series vals = collect(getter);
    rep.mean.*mf = mean_of(vals);
    rep.stddev.*sf = std::sqrt(variance_pop(vals));
  };
  finish([](const Metrics& m) { return m.accuracy; }, &Metrics::accuracy, &Metrics::accuracy);
  finish([](const Metrics& m) { return m.macro_precision; }, &Metrics::macro_precision,
         &Metrics::macro_precision);
  finish([](const Metrics& m) { return m.macro_recall; }, &Metrics::macro_recall,
         &Metrics::macro_recall);
  finish([](const Metrics& m) { return m.macro_f1; }, &Metrics::macro_f1, &Metrics::macro_f1);
  return rep;
}

}  // namespace tsce
