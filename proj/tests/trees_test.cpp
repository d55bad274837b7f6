#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tsce/trees.hpp"

using namespace tsce;

namespace {

double nll(Series margins, int y) {
  softmax_inplace(margins);
  return -std::log(margins[static_cast<std::size_t>(y)]);
}

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
  // make sure every class appears
  for (int c = 0; c < k; ++c) pr.y[static_cast<std::size_t>(c)] = c;
  return pr;
}

}  // namespace

TEST_CASE("softmax basics") {
  Series v = {1, 2, 3};
  softmax_inplace(v);
  CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v[2] > v[1]);
  Series big = {1000, 1001};
  softmax_inplace(big);  // must not overflow
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("split_gain hand value") {
  CHECK(split_gain(-0.5, 0.25, 0.5, 0.25, 1.0, 0.0) == doctest::Approx(0.2).epsilon(1e-12));
  // gamma is a flat penalty
  CHECK(split_gain(-0.5, 0.25, 0.5, 0.25, 1.0, 0.05) ==
        doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("softmax gradient and hessian match finite differences") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> val(-3, 3);
  for (int trial = 0; trial < 30; ++trial) {
    int k = 2 + trial % 4;
    Series m(static_cast<std::size_t>(k));
    for (auto& v : m) v = val(rng);
    int y = trial % k;
    Series g, h;
    softmax_grad_hess(m, y, g, h);
    REQUIRE(g.size() == m.size());
    REQUIRE(h.size() == m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
      auto loss_j = [&](double mj) {
        Series mm = m;
        mm[j] = mj;
        return nll(mm, y);
      };
      double g_fd = oracle::central_diff(loss_j, m[j], 1e-5);
      CHECK(oracle::rel_err(g[j], g_fd) <= 1e-4);
      double hh = 1e-4;
      double h_fd = (loss_j(m[j] + hh) - 2 * loss_j(m[j]) + loss_j(m[j] - hh)) / (hh * hh);
      CHECK(oracle::rel_err(h[j], h_fd) <= 1e-4);
    }
  }
}

TEST_CASE("training loss is non-increasing every round") {
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    auto pr = random_problem(1000 + seed, 40, 4, 2 + static_cast<int>(seed) % 3);
    GbtParams params;
    params.rounds = 25;
    params.max_depth = 3;
    auto e = fit_gbt(pr.X, pr.y, params);
    REQUIRE(e.train_loss.size() == 25);
    for (std::size_t t = 1; t < e.train_loss.size(); ++t)
      CHECK(e.train_loss[t] <= e.train_loss[t - 1] + 1e-12);
  }
}

TEST_CASE("perfect accuracy on separable data with zero gamma") {
  Matrix X;
  std::vector<int> y;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 15; ++i) {
      X.push_back({3.0 * c + jitter(rng), jitter(rng)});
      y.push_back(c);
    }
  GbtParams params;
  params.rounds = 30;
  params.gamma = 0.0;
  auto e = fit_gbt(X, y, params);
  for (std::size_t i = 0; i < X.size(); ++i) CHECK(predict_class(e, X[i]) == y[i]);
}

TEST_CASE("fit is deterministic") {
  auto pr = random_problem(55, 30, 3, 3);
  GbtParams params;
  params.rounds = 10;
  auto a = fit_gbt(pr.X, pr.y, params);
  auto b = fit_gbt(pr.X, pr.y, params);
  CHECK(a.train_loss == b.train_loss);
  for (std::size_t i = 0; i < pr.X.size(); ++i)
    CHECK(predict_proba(a, pr.X[i]) == predict_proba(b, pr.X[i]));
}

TEST_CASE("probabilities are a distribution and margins are consistent") {
  auto pr = random_problem(77, 25, 3, 4);
  GbtParams params;
  params.rounds = 8;
  auto e = fit_gbt(pr.X, pr.y, params);
  for (const auto& row : pr.X) {
    auto p = predict_proba(e, row);
    REQUIRE(p.size() == 4);
    double s = 0;
    for (double v : p) {
      CHECK(v >= 0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    auto m = e.margins(row);
    Series sm = m;
    softmax_inplace(sm);
    for (std::size_t c = 0; c < 4; ++c) CHECK(p[c] == doctest::Approx(sm[c]).epsilon(1e-12));
  }
}

TEST_CASE("input validation") {
  GbtParams params;
  CHECK_THROWS(static_cast<void>(fit_gbt({}, {}, params)));
  CHECK_THROWS(static_cast<void>(fit_gbt({{1}, {2}}, {0, 0}, params)));   // single class
  CHECK_THROWS(static_cast<void>(fit_gbt({{1}, {2}}, {0, -1}, params)));  // negative label
  CHECK_THROWS(static_cast<void>(fit_gbt({{1}, {2, 3}}, {0, 1}, params)));  // ragged
  CHECK_THROWS(static_cast<void>(
      fit_gbt({{1}, {std::numeric_limits<double>::quiet_NaN()}}, {0, 1}, params)));
}

TEST_CASE("gain importance highlights the informative feature") {
  Matrix X;
  std::vector<int> y;
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> noise(-1, 1);
  for (int i = 0; i < 60; ++i) {
    double sig = (i % 2 == 0) ? -2.0 : 2.0;
    X.push_back({noise(rng), sig + 0.1 * noise(rng), noise(rng)});
    y.push_back(i % 2);
  }
  GbtParams params;
  params.rounds = 10;
  params.max_depth = 2;
  auto e = fit_gbt(X, y, params);
  auto imp = gain_importance(e);
  REQUIRE(imp.size() == 3);
  CHECK(imp[1] > imp[0]);
  CHECK(imp[1] > imp[2]);
}

TEST_CASE("save/load round trip preserves predictions") {
  auto pr = random_problem(91, 30, 4, 3);
  GbtParams params;
  params.rounds = 12;
  params.max_depth = 4;
  auto e = fit_gbt(pr.X, pr.y, params);
  auto path = (std::filesystem::temp_directory_path() / "tsce_gbt_roundtrip.json").string();
  save_gbt_json(e, path);
  auto e2 = load_gbt_json(path);
  std::remove(path.c_str());
  CHECK(e2.n_classes == e.n_classes);
  CHECK(e2.n_features == e.n_features);
  for (const auto& row : pr.X) {
    auto pa = predict_proba(e, row);
    auto pb = predict_proba(e2, row);
    for (std::size_t c = 0; c < pa.size(); ++c)
      CHECK(pa[c] == doctest::Approx(pb[c]).epsilon(1e-12));
  }
}
