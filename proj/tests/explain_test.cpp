#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tsce/explain.hpp"
#include "tsce/synthgen.hpp"

using namespace tsce;

namespace {

struct RandomProblem {
  Matrix X;
  std::vector<int> y;
};

RandomProblem random_problem(std::uint32_t seed, int n, int p, int k) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> val(-2, 2);
  std::uniform_int_distribution<int> lab(0, k - 1);
  RandomProblem pr;
  for (int i = 0; i < n; ++i) {
    Series row(static_cast<std::size_t>(p));
    for (auto& v : row) v = val(rng);
    pr.X.push_back(row);
    pr.y.push_back(lab(rng));
  }
  for (int c = 0; c < k; ++c) pr.y[static_cast<std::size_t>(c)] = c;
  return pr;
}

// 1-layer FCN whose relu stays active on [-1,1]^T inputs: affine in x there.
FcnModel affine_model(int n_classes, std::uint64_t seed) {
  FcnArchitecture a;
  a.n_layers = 1;
  a.first_filters = 4;
  a.n_classes = n_classes;
  auto m = init_fcn(a, seed);
  for (auto& b : m.convs[0].b) b = 10.0;
  return m;
}

}  // namespace

TEST_CASE("exact shapley on additive and synergy games") {
  // additive: v(S) = sum of w_i over S -> phi_i = w_i
  Series w = {1.0, 2.0, -0.5};
  double base = -1;
  auto phi = exact_shapley_game(
      [&](std::uint32_t mask) {
        double s = 0;
        for (int i = 0; i < 3; ++i)
          if (mask & (1u << i)) s += w[static_cast<std::size_t>(i)];
        return s;
      },
      3, &base);
  CHECK(base == doctest::Approx(0.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(phi[i] == doctest::Approx(w[i]).epsilon(1e-12));

  // pure synergy: v({1,2}) = 1, everything else 0 -> even split
  auto phi2 = exact_shapley_game(
      [](std::uint32_t mask) { return mask == 3u ? 1.0 : 0.0; }, 2, &base);
  CHECK(base == doctest::Approx(0.0));
  CHECK(phi2[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(phi2[1] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS(static_cast<void>(exact_shapley_game([](std::uint32_t) { return 0.0; }, 0)));
  CHECK_THROWS(static_cast<void>(exact_shapley_game([](std::uint32_t) { return 0.0; }, 21)));
}

TEST_CASE("brute force shapley on a linear model") {
  Series w = {2.0, -1.0, 0.5};
  auto f = [&](const Series& z) {
    double s = 1.0;  // intercept
    for (std::size_t i = 0; i < z.size(); ++i) s += w[i] * z[i];
    return s;
  };
  Series x = {1.0, 2.0, 3.0};
  Matrix bg = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  auto a = brute_force_shapley(f, x, bg);
  // phi_i = w_i (x_i - mean b_i)
  CHECK(a.values[0] == doctest::Approx(2.0 * (1.0 - 0.5)).epsilon(1e-12));
  CHECK(a.values[1] == doctest::Approx(-1.0 * (2.0 - 0.5)).epsilon(1e-12));
  CHECK(a.values[2] == doctest::Approx(0.5 * (3.0 - 0.5)).epsilon(1e-12));
  CHECK(a.base_value == doctest::Approx(1.0 + (2.0 - 1.0 + 0.5) * 0.5).epsilon(1e-12));
  CHECK_THROWS(static_cast<void>(brute_force_shapley(f, Series(13, 0.0), bg)));
  CHECK_THROWS(static_cast<void>(brute_force_shapley(f, x, Matrix{})));
}

TEST_CASE("treeshap equals the exact shapley values of the cover-weighted game") {
  std::mt19937 rng(606);
  std::uniform_int_distribution<int> pd(2, 10), kd(2, 3), rd(3, 6);
  std::uniform_real_distribution<double> val(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    int p = pd(rng), k = kd(rng);
    auto pr = random_problem(3000 + static_cast<std::uint32_t>(trial), 30, p, k);
    GbtParams params;
    params.rounds = rd(rng);
    params.max_depth = 3;
    auto e = fit_gbt(pr.X, pr.y, params);

    Series x(static_cast<std::size_t>(p));
    for (auto& v : x) v = val(rng);
    int cls = trial % k;

    auto got = treeshap(e, x, cls);
    double base = 0;
    auto phi = exact_shapley_game(
        [&](std::uint32_t mask) {
          std::vector<char> coalition(static_cast<std::size_t>(p), 0);
          for (int i = 0; i < p; ++i)
            if (mask & (1u << i)) coalition[static_cast<std::size_t>(i)] = 1;
          return ensemble_cond_margin(e, cls, x, coalition);
        },
        p, &base);

    REQUIRE(got.values.size() == static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i)
      CHECK(std::abs(got.values[static_cast<std::size_t>(i)] -
                     phi[static_cast<std::size_t>(i)]) <= 1e-8);
    CHECK(std::abs(got.base_value - base) <= 1e-8);

    // local accuracy: contributions plus base reproduce the margin
    double total = got.base_value;
    for (double v : got.values) total += v;
    CHECK(std::abs(total - e.margin(x, cls)) <= 1e-8);
  }
}

TEST_CASE("treeshap gives exactly zero to unused features") {
  // feature 1 is constant, so no tree can split on it
  auto pr = random_problem(42, 40, 3, 2);
  for (auto& row : pr.X) row[1] = 7.0;
  GbtParams params;
  params.rounds = 10;
  params.max_depth = 3;
  auto e = fit_gbt(pr.X, pr.y, params);
  for (int i = 0; i < 10; ++i) {
    auto a = treeshap(e, pr.X[static_cast<std::size_t>(i)], i % 2);
    CHECK(a.values[1] == 0.0);  // bitwise zero, never touched
  }
}

TEST_CASE("treeshap handles single-leaf and depth-1 trees") {
  TreeEnsemble e;
  e.n_classes = 2;
  e.n_features = 2;
  e.params.eta = 0.5;
  e.base_score = 0.25;

  Tree stump;  // single leaf
  stump.nodes.push_back({-1, 0, -1, -1, 0.8, 10.0, 0});

  Tree split;  // x0 < 1.0 ? 2.0 : -1.0, covers 3 and 7
  split.nodes.push_back({0, 1.0, 1, 2, 0, 10.0, 1.0});
  split.nodes.push_back({-1, 0, -1, -1, 2.0, 3.0, 0});
  split.nodes.push_back({-1, 0, -1, -1, -1.0, 7.0, 0});

  e.trees.push_back({stump, split});

  auto a0 = treeshap(e, {0.0, 5.0}, 0);  // stump: no features involved
  CHECK(a0.values[0] == 0.0);
  CHECK(a0.values[1] == 0.0);
  CHECK(a0.base_value == doctest::Approx(0.25 + 0.5 * 0.8).epsilon(1e-12));

  auto a1 = treeshap(e, {0.0, 5.0}, 1);  // goes left
  double expected_leaf = (3.0 * 2.0 + 7.0 * -1.0) / 10.0;  // -0.1
  CHECK(a1.base_value == doctest::Approx(0.25 + 0.5 * expected_leaf).epsilon(1e-12));
  CHECK(a1.values[0] == doctest::Approx(0.5 * (2.0 - expected_leaf)).epsilon(1e-12));
  CHECK(a1.values[1] == 0.0);

  CHECK_THROWS(static_cast<void>(treeshap(e, {0.0, 5.0}, 2)));
  CHECK_THROWS(static_cast<void>(treeshap(e, {0.0}, 0)));
}

TEST_CASE("gradient shap is exact on an affine model with one baseline") {
  auto m = affine_model(3, 2026);
  Series x = {0.4, -0.6, 0.8, 0.1, -0.3, 0.5, -0.9, 0.2};
  Series b = {-0.2, 0.3, 0.0, -0.5, 0.6, -0.1, 0.4, -0.7};
  Matrix bg = {b};
  for (int cls = 0; cls < 3; ++cls) {
    auto w = class_input_gradient(m, x, cls);  // constant over the box
    auto a = gradient_shap(m, x, bg, cls, 16, 99);
    REQUIRE(a.values.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(a.values[i] == doctest::Approx(w[i] * (x[i] - b[i])).epsilon(1e-9));
    // completeness is exact in the affine case
    FcnActivations ax, ab;
    fcn_forward(m, x, ax);
    fcn_forward(m, b, ab);
    double total = a.base_value;
    for (double v : a.values) total += v;
    CHECK(total == doctest::Approx(ax.logits[static_cast<std::size_t>(cls)]).epsilon(1e-9));
    CHECK(a.base_value ==
          doctest::Approx(ab.logits[static_cast<std::size_t>(cls)]).epsilon(1e-12));
  }
}

TEST_CASE("gradient shap of a point at its own baseline is zero") {
  auto m = affine_model(2, 7);
  Series x = {0.1, 0.2, -0.3, 0.4, 0.0, -0.1, 0.2, 0.3};
  auto a = gradient_shap(m, x, {x}, 0, 32, 5);
  for (double v : a.values) CHECK(v == 0.0);
}

TEST_CASE("gradient shap is deterministic in the seed") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 6;
  spec.length = 12;
  spec.spike_positions = {2, 9};
  spec.seed = 4;
  auto c = gen_spikes(spec);
  FcnArchitecture arch;
  arch.n_layers = 1;
  arch.first_filters = 4;
  arch.n_classes = 2;
  OptParams opt;
  opt.epochs = 30;
  opt.lr = 0.01;
  auto m = fit_fcn(c.values, *c.labels, arch, opt, 11);
  Matrix bg(c.values.begin(), c.values.begin() + 4);
  auto a1 = gradient_shap(m, c.values[5], bg, 1, 64, 123);
  auto a2 = gradient_shap(m, c.values[5], bg, 1, 64, 123);
  auto a3 = gradient_shap(m, c.values[5], bg, 1, 64, 124);
  CHECK(a1.values == a2.values);
  CHECK(a1.values != a3.values);
}

TEST_CASE("gradient shap completeness gap shrinks with smooth models") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 10;
  spec.length = 14;
  spec.noise_sigma = 0.05;
  spec.spike_positions = {3, 10};
  spec.seed = 21;
  auto c = gen_spikes(spec);
  FcnArchitecture arch;
  arch.n_layers = 1;
  arch.first_filters = 4;
  arch.n_classes = 2;
  OptParams opt;
  opt.epochs = 40;
  opt.lr = 0.01;
  auto m = fit_fcn(c.values, *c.labels, arch, opt, 5);
  Matrix bg(c.values.begin(), c.values.begin() + 6);
  const Series& x = c.values[15];
  int cls = fcn_predict_class(m, x);
  auto a = gradient_shap(m, x, bg, cls, 2000, 77);
  FcnActivations act;
  fcn_forward(m, x, act);
  double fx = act.logits[static_cast<std::size_t>(cls)];
  double total = a.base_value;
  for (double v : a.values) total += v;
  double denom = std::max(std::abs(fx - a.base_value), 1e-6);
  CHECK(std::abs(total - fx) / denom <= 0.05);
}

TEST_CASE("cam_combine hand examples") {
  // single channel, uniform positive gradient: map equals the activation
  auto map1 = cam_combine({{0.0, 1.0, 0.0}}, {{1.0, 1.0, 1.0}});
  CHECK(map1 == Series{0.0, 1.0, 0.0});
  // negative weights clip to zero
  auto map2 = cam_combine({{0.0, 1.0, 0.0}}, {{-1.0, -1.0, -1.0}});
  CHECK(map2 == Series{0.0, 0.0, 0.0});
  // two channels mix through their alphas
  auto map3 = cam_combine({{1.0, 0.0}, {0.0, 2.0}}, {{0.5, 0.5}, {1.0, -1.0}});
  CHECK(map3[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(map3[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("grad_cam output is a non-negative map over time") {
  auto m = affine_model(2, 3);
  Series x = {0.5, -0.5, 0.25, 0.75, -0.25, 0.1, 0.9, -0.9};
  for (int cls = 0; cls < 2; ++cls) {
    auto a = grad_cam(m, x, cls);
    REQUIRE(a.values.size() == x.size());
    for (double v : a.values) CHECK(v >= 0.0);
  }
}

TEST_CASE("aggregation helpers") {
  std::vector<Attribution> attrs(2);
  attrs[0].values = {1.0, -3.0};
  attrs[1].values = {-2.0, 1.0};
  auto g = aggregate_global(attrs);
  CHECK(g == Series{1.5, 2.0});

  std::vector<Attribution> one(3);
  one[0].values = {1.0, -1.0};
  one[1].values = {5.0, 5.0};
  one[2].values = {-3.0, 1.0};
  auto agg = aggregate_cluster(one, {0, 1, 0}, 0);
  REQUIRE(agg.member_abs.size() == 2);
  CHECK(agg.member_abs[0] == Series{1.0, 1.0});
  CHECK(agg.member_abs[1] == Series{3.0, 1.0});
  CHECK(agg.mean == Series{2.0, 1.0});
  auto single = aggregate_cluster(one, {0, 1, 0}, 1);
  CHECK(single.mean == Series{5.0, 5.0});
  CHECK_THROWS(static_cast<void>(aggregate_cluster(one, {0, 1, 0}, 2)));
  CHECK_THROWS(static_cast<void>(aggregate_global({})));
}

TEST_CASE("window averaging") {
  Series v = {1, 2, 3, 4, 5, 10, 10, 10, 10, 10};
  auto w = window_average(v, 5);
  CHECK(w == Series{3, 3, 3, 3, 3, 10, 10, 10, 10, 10});
  CHECK(window_average(v, 1) == v);
  // a trailing short window uses its own length
  Series v7 = {1, 2, 3, 4, 5, 6, 8};
  auto w7 = window_average(v7, 5);
  CHECK(w7[0] == doctest::Approx(3.0));
  CHECK(w7[5] == doctest::Approx(7.0));
  CHECK(w7[6] == doctest::Approx(7.0));
  auto m7 = window_means(v7, 5);
  REQUIRE(m7.size() == 2);
  CHECK(m7[0] == doctest::Approx(3.0));
  CHECK(m7[1] == doctest::Approx(7.0));
  // when the length is a multiple of the window, the overall mean is preserved
  double before = mean_of(v), after = mean_of(window_average(v, 5));
  CHECK(after == doctest::Approx(before).epsilon(1e-12));
  CHECK_THROWS(static_cast<void>(window_means(v, 0)));
}

TEST_CASE("rank agreement") {
  Series a = {5, 4, 3, 2, 1};
  auto same = rank_agreement(a, a, 3);
  CHECK(same.spearman == doctest::Approx(1.0));
  CHECK(same.topk_jaccard == doctest::Approx(1.0));
  CHECK(same.spearman_defined);

  Series rev = {1, 2, 3, 4, 5};
  auto opp = rank_agreement(a, rev, 3);
  CHECK(opp.spearman == doctest::Approx(-1.0));

  // top-3 sets {0,1,2} vs {1,2,3}: jaccard 2/4
  Series b = {1, 5, 4, 3, 2};
  auto mix = rank_agreement(a, b, 3);
  CHECK(mix.topk_jaccard == doctest::Approx(0.5));

  Series flat = {2, 2, 2, 2, 2};
  auto deg = rank_agreement(a, flat, 2);
  CHECK_FALSE(deg.spearman_defined);
  CHECK(deg.spearman == doctest::Approx(0.0));

  // spearman only sees ranks: positive scaling changes nothing
  Series scaled = {10, 8, 6, 4, 2};
  auto inv = rank_agreement(a, scaled, 3);
  CHECK(inv.spearman == doctest::Approx(1.0));
  CHECK(inv.topk_jaccard == doctest::Approx(1.0));

  CHECK_THROWS(static_cast<void>(rank_agreement(a, {1, 2}, 2)));
  CHECK_THROWS(static_cast<void>(rank_agreement(a, rev, 0)));
  CHECK_THROWS(static_cast<void>(rank_agreement(a, rev, 6)));
}

TEST_CASE("build_explanation_set assembles aggregates") {
  std::vector<Attribution> attrs(4);
  attrs[0].values = {1, 2, 3, 4, -5, 6, 0.5};  // 6 time positions + 1 feature
  attrs[1].values = {2, 2, 2, 2, 2, 2, 1.0};
  attrs[2].values = {-1, 0, 1, 0, -1, 0, 0.0};
  attrs[3].values = {4, 4, 4, 4, 4, 4, 2.0};
  std::vector<int> labels = {0, 0, 1, 1};
  auto set = build_explanation_set(ExplainMethod::treeshap, attrs, labels, 6, 3);
  CHECK(set.global.size() == 7);
  CHECK(set.global[0] == doctest::Approx(2.0));
  REQUIRE(set.per_cluster.count(0) == 1);
  REQUIRE(set.per_cluster.count(1) == 1);
  CHECK(set.per_cluster.at(0)[0] == doctest::Approx(1.5));
  CHECK(set.per_cluster.at(1)[0] == doctest::Approx(2.5));
  // windowed aggregates cover only the six time positions, two windows of 3
  REQUIRE(set.windowed_global.size() == 2);
  CHECK(set.windowed_per_cluster.at(0).size() == 2);
  CHECK(set.window == 3);

  auto flat = build_explanation_set(ExplainMethod::gradcam, attrs, labels, 6, 0);
  CHECK(flat.window == 0);
  CHECK(flat.windowed_global.empty());
  CHECK_THROWS(static_cast<void>(
      build_explanation_set(ExplainMethod::treeshap, {}, labels, 6, 3)));
}
