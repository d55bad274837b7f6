#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "tsce/classify.hpp"
#include "tsce/synthgen.hpp"

using namespace tsce;

namespace {

TimeSeriesCollection three_cluster_collection() {
  // clusters of size 5, 4, 3 with well separated levels
  TimeSeriesCollection c;
  std::vector<int> sizes = {5, 4, 3};
  int id = 0;
  for (std::size_t cl = 0; cl < sizes.size(); ++cl)
    for (int i = 0; i < sizes[cl]; ++i) {
      c.ids.push_back("s" + std::to_string(id++));
      Series row(8, 10.0 * static_cast<double>(cl));
      row[static_cast<std::size_t>(i % 8)] += 0.25;  // small intra-cluster variety
      c.values.push_back(row);
      c.mask.emplace_back(8, true);
    }
  return c;
}

std::vector<int> three_cluster_labels() {
  std::vector<int> l;
  for (int i = 0; i < 5; ++i) l.push_back(0);
  for (int i = 0; i < 4; ++i) l.push_back(1);
  for (int i = 0; i < 3; ++i) l.push_back(2);
  return l;
}

}  // namespace

TEST_CASE("filter_clusters drops small classes and re-indexes densely") {
  std::vector<int> labels = {7, 7, 7, 7, 7, 3, 3, 3, 3, 9, 9, 9};
  auto fr = filter_clusters(labels);
  CHECK(fr.class_to_orig == std::vector<int>{3, 7});  // 9 has only 3 members
  CHECK(fr.kept_indices.size() == 9);
  for (std::size_t i = 0; i < fr.kept_indices.size(); ++i) {
    int orig = labels[fr.kept_indices[i]];
    CHECK(fr.class_to_orig[static_cast<std::size_t>(fr.new_labels[i])] == orig);
  }
  CHECK_THROWS(static_cast<void>(filter_clusters({0, 0, 0, 0, 1, 1, 1})));  // one survivor
  CHECK_THROWS(static_cast<void>(filter_clusters({})));
}

TEST_CASE("downsample_largest trims only the single largest class to v") {
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(0);
  for (int i = 0; i < 4; ++i) labels.push_back(1);
  int v = 0;
  auto kept = downsample_largest(labels, 11, &v);
  CHECK(v == 7);  // floor(14 / 2)
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i : kept) (labels[i] == 0 ? n0 : n1)++;
  CHECK(n0 == 7);
  CHECK(n1 == 4);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  CHECK(kept == downsample_largest(labels, 11));  // deterministic
  CHECK(kept != downsample_largest(labels, 12));  // seed-sensitive subset

  // nothing exceeds v: identity
  std::vector<int> balanced = {0, 0, 0, 1, 1, 1};
  auto all = downsample_largest(balanced, 5, &v);
  CHECK(v == 3);
  CHECK(all.size() == 6);

  // a tie for largest trims the lowest class index only
  std::vector<int> tied = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2};
  auto kt = downsample_largest(tied, 1, &v);
  CHECK(v == 3);
  std::size_t c0 = 0, c1 = 0, c2 = 0;
  for (std::size_t i : kt) {
    if (tied[i] == 0) ++c0;
    if (tied[i] == 1) ++c1;
    if (tied[i] == 2) ++c2;
  }
  CHECK(c0 == 3);
  CHECK(c1 == 5);
  CHECK(c2 == 1);

  CHECK_THROWS(static_cast<void>(downsample_largest({0, 0, 2}, 1)));  // not dense
  CHECK_THROWS(static_cast<void>(downsample_largest({}, 1)));
}

TEST_CASE("stratified_split keeps proportions and partitions the data") {
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(0);
  for (int i = 0; i < 20; ++i) labels.push_back(1);
  auto [train, test] = stratified_split(labels, 0.3, 7);
  CHECK(train.size() + test.size() == labels.size());
  std::set<std::size_t> seen(train.begin(), train.end());
  for (std::size_t i : test) CHECK(seen.count(i) == 0);
  std::size_t t0 = 0, t1 = 0;
  for (std::size_t i : test) (labels[i] == 0 ? t0 : t1)++;
  CHECK(t0 == 3);
  CHECK(t1 == 6);
  CHECK(std::is_sorted(train.begin(), train.end()));
  CHECK(std::is_sorted(test.begin(), test.end()));
  auto again = stratified_split(labels, 0.3, 7);
  CHECK(again.first == train);
  // every class lands on both sides even at extreme fractions
  auto [tr2, te2] = stratified_split({0, 0, 1, 1}, 0.01, 3);
  CHECK(te2.size() == 2);
  CHECK_THROWS(static_cast<void>(stratified_split({0, 1, 1}, 0.3, 1)));  // class 0 too small
  CHECK_THROWS(static_cast<void>(stratified_split(labels, 0.0, 1)));
  CHECK_THROWS(static_cast<void>(stratified_split(labels, 1.0, 1)));
}

TEST_CASE("knn prediction and tie rules") {
  Matrix X = {{0.0}, {2.0}, {10.0}, {12.0}};
  std::vector<int> y = {0, 0, 1, 1};
  CHECK(knn_predict(X, y, {1.0}, 2, false) == 0);
  CHECK(knn_predict(X, y, {11.0}, 2, false) == 1);
  // K = 1 on a training point returns its own label
  CHECK(knn_predict(X, y, {12.0}, 1, false) == 1);

  // vote tie: the class with the smaller summed distance wins
  Matrix Xt = {{-1.0}, {1.0}, {-0.5}, {1.4}};
  std::vector<int> yt = {0, 0, 1, 1};
  CHECK(knn_predict(Xt, yt, {0.0}, 4, false) == 1);  // 1.9 < 2.0
  std::vector<int> yt2 = {1, 1, 0, 0};
  CHECK(knn_predict(Xt, yt2, {0.0}, 4, false) == 0);

  // full tie (counts and sums): lower class index
  Matrix Xe = {{-1.0}, {1.0}, {-1.0}, {1.0}};
  std::vector<int> ye = {0, 0, 1, 1};
  CHECK(knn_predict(Xe, ye, {0.0}, 4, false) == 0);

  // distance tie: lower train index enters the neighbor set first
  Matrix Xd = {{5.0}, {5.0}};
  std::vector<int> yd = {1, 0};
  CHECK(knn_predict(Xd, yd, {5.0}, 1, false) == 1);

  // dtw variant aligns shifted spikes
  Matrix Xs = {{0, 1, 0, 0, 0}, {0, 0, 0, 5, 5}};
  std::vector<int> ys = {0, 1};
  CHECK(knn_predict(Xs, ys, {0, 0, 1, 0, 0}, 1, true) == 0);

  CHECK_THROWS(static_cast<void>(knn_predict(X, y, {1.0}, 0, false)));
  CHECK_THROWS(static_cast<void>(knn_predict(X, y, {1.0}, 5, false)));
  CHECK_THROWS(static_cast<void>(knn_predict({}, {}, {1.0}, 1, false)));
}

TEST_CASE("make_class_task filters, downsamples, and builds inputs") {
  auto c = three_cluster_collection();
  auto labels = three_cluster_labels();

  auto task = make_class_task(c, labels, InputConfig::default_config, 1);
  CHECK(task.k_before == 3);
  CHECK(task.k_after == 2);  // the 3-member cluster is dropped
  CHECK(task.v == 4);        // floor(9 / 2)
  CHECK(task.inputs.size() == 8);  // 5 -> 4, plus the 4
  CHECK(task.labels.size() == 8);
  CHECK(task.sample_ids.size() == 8);
  CHECK(task.class_to_orig == std::vector<int>{0, 1});
  CHECK(task.time_len == 8);
  CHECK(task.inputs[0].size() == 8);
  CHECK(task.position_names.size() == 8);
  CHECK(task.position_names[0] == "t0");

  auto feat = make_class_task(c, labels, InputConfig::feat_only, 1);
  CHECK(feat.inputs[0].size() == 20);
  CHECK(feat.time_len == 0);
  auto both = make_class_task(c, labels, InputConfig::with_feats, 1);
  CHECK(both.inputs[0].size() == 28);
  CHECK(both.time_len == 8);

  CHECK_THROWS(static_cast<void>(make_class_task(c, {0, 1}, InputConfig::default_config, 1)));
}

TEST_CASE("evaluate computes macro metrics over truth classes") {
  auto perfect = evaluate({0, 1, 2, 0}, {0, 1, 2, 0});
  CHECK(perfect.accuracy == doctest::Approx(1.0));
  CHECK(perfect.macro_f1 == doctest::Approx(1.0));
  CHECK(perfect.macro_precision == doctest::Approx(1.0));
  CHECK(perfect.macro_recall == doctest::Approx(1.0));

  // confusion [[1,1],[0,2]]
  auto m = evaluate({0, 1, 1, 1}, {0, 0, 1, 1});
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.macro_f1 == doctest::Approx(11.0 / 15.0));
  CHECK(m.macro_precision == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  CHECK(m.macro_recall == doctest::Approx(0.75));

  // a never-predicted class contributes zeros, not NaN
  auto z = evaluate({0, 0, 0}, {0, 0, 1});
  CHECK(std::isfinite(z.macro_f1));
  CHECK(z.macro_f1 == doctest::Approx(0.8 / 2.0));

  // macro f1 is bracketed by the per-class extremes
  auto b = evaluate({0, 1, 0, 1, 1}, {0, 0, 0, 1, 1});
  CHECK(b.macro_f1 >= 2.0 / 3.0 - 1e-12);
  CHECK(b.macro_f1 <= 1.0);

  CHECK_THROWS(static_cast<void>(evaluate({0}, {0, 1})));
  CHECK_THROWS(static_cast<void>(evaluate({}, {})));
}

TEST_CASE("describe strings are stable and csv-safe") {
  HyperParams knn;
  knn.kind = ModelKind::knn;
  CHECK(knn.describe() == "knn(k=5;metric=minkowski)");
  knn.knn.k = 10;
  knn.knn.use_dtw = true;
  CHECK(knn.describe() == "knn(k=10;metric=dtw)");

  HyperParams gbt;
  gbt.kind = ModelKind::gbt;
  CHECK(gbt.describe() == "xgboost(gamma=0;max_depth=6;eta=0.3;rounds=100)");

  HyperParams fcn;
  fcn.kind = ModelKind::fcn;
  fcn.fcn_arch.n_layers = 2;
  fcn.fcn_arch.first_filters = 16;
  fcn.fcn_opt.adam = false;
  fcn.fcn_opt.lr = 0.01;
  fcn.fcn_opt.epochs = 100;
  CHECK(fcn.describe() == "fcn(layers=2;filters=16;opt=sgd;lr=0.01;epochs=100)");

  for (const auto& s : {knn.describe(), gbt.describe(), fcn.describe()})
    CHECK(s.find(',') == std::string::npos);

  CHECK(to_string(ModelKind::gbt) == "xgboost");
  CHECK(model_kind_from_string("xgboost") == ModelKind::gbt);
  CHECK(model_kind_from_string("gbt") == ModelKind::gbt);
  CHECK_THROWS(static_cast<void>(model_kind_from_string("svm")));
}

TEST_CASE("standardize centers and scales per sample") {
  auto s = standardize({1, 2, 3});
  CHECK(mean_of(s) == doctest::Approx(0.0));
  CHECK(variance_pop(s) == doctest::Approx(1.0));
  auto flat = standardize({4, 4, 4});
  CHECK(flat == Series{0, 0, 0});
  CHECK(standardize({}).empty());
}

TEST_CASE("train/predict round trip per model kind") {
  auto c = three_cluster_collection();
  auto task = make_class_task(c, three_cluster_labels(), InputConfig::default_config, 0);

  HyperParams knn;
  knn.kind = ModelKind::knn;
  knn.knn.k = 3;
  auto mk = train_model(task.inputs, task.labels, knn, 0);
  HyperParams gbt;
  gbt.kind = ModelKind::gbt;
  gbt.gbt.rounds = 20;
  auto mg = train_model(task.inputs, task.labels, gbt, 0);
  for (std::size_t i = 0; i < task.inputs.size(); ++i) {
    CHECK(model_predict(mk, task.inputs[i]) == task.labels[i]);
    CHECK(model_predict(mg, task.inputs[i]) == task.labels[i]);
  }

  HyperParams bad;
  bad.kind = ModelKind::knn;
  bad.knn.k = 100;
  CHECK_THROWS(static_cast<void>(train_model(task.inputs, task.labels, bad, 0)));
}

TEST_CASE("grid search records failing points and returns a working winner") {
  // 16 samples -> train split of 11: knn k=15 cannot fit and must be recorded
  TimeSeriesCollection c;
  for (int i = 0; i < 16; ++i) {
    c.ids.push_back("g" + std::to_string(i));
    c.values.push_back({i < 8 ? 0.0 : 5.0, static_cast<double>(i % 4)});
    c.mask.emplace_back(2, true);
  }
  std::vector<int> labels(16, 0);
  for (int i = 8; i < 16; ++i) labels[static_cast<std::size_t>(i)] = 1;
  ClassTask task;
  task.inputs = c.values;
  task.labels = labels;

  std::vector<std::string> failures;
  auto best = grid_search(task, ModelKind::knn, 0, {}, &failures);
  CHECK(best.kind == ModelKind::knn);
  CHECK(best.knn.k < 15);
  CHECK(failures.size() == 2);
  for (const auto& f : failures) CHECK(f.find("k=15") != std::string::npos);

  auto best_gbt = grid_search(task, ModelKind::gbt, 0);
  CHECK(best_gbt.kind == ModelKind::gbt);
}

TEST_CASE("run_eval_suite aggregates over seeds") {
  auto c = three_cluster_collection();
  auto task = make_class_task(c, three_cluster_labels(), InputConfig::default_config, 0);
  HyperParams knn;
  knn.kind = ModelKind::knn;
  knn.knn.k = 1;

  auto rep = run_eval_suite(task, knn, {0, 1, 2, 3, 4});
  REQUIRE(rep.per_seed.size() == 5);
  CHECK(rep.mean.macro_f1 == doctest::Approx(1.0));  // trivially separable
  CHECK(rep.stddev.macro_f1 == doctest::Approx(0.0));

  // identical seeds: zero spread by construction
  auto same = run_eval_suite(task, knn, {3, 3, 3});
  CHECK(same.stddev.accuracy == doctest::Approx(0.0));
  CHECK(same.per_seed[0].accuracy == doctest::Approx(same.per_seed[2].accuracy));

  CHECK_THROWS(static_cast<void>(run_eval_suite(task, knn, {})));
}
