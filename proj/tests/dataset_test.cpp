#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "tsce/dataset.hpp"
#include "tsce/distance.hpp"

using namespace tsce;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

TimeSeriesCollection make(const Matrix& rows) {
  TimeSeriesCollection c;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    c.ids.push_back("s" + std::to_string(i));
    c.values.push_back(rows[i]);
    c.mask.emplace_back(rows[i].size(), true);
  }
  return c;
}

}  // namespace

TEST_CASE("load_csv basic and missing cells") {
  auto p = write_temp("ds_basic.csv", "id,t0,t1\na,1,2\nb,3,\n");
  auto c = load_csv(p.string());
  CHECK(c.size() == 2);
  CHECK(c.length() == 2);
  CHECK(c.values[0][0] == 1.0);
  CHECK(c.mask[1][1] == false);
  CHECK_FALSE(c.labels.has_value());
}

TEST_CASE("load_csv with labels") {
  auto p = write_temp("ds_lab.csv", "id,label,t0,t1\na,0,1,2\nb,3,4,5\n");
  auto c = load_csv(p.string());
  REQUIRE(c.labels.has_value());
  CHECK((*c.labels)[0] == 0);
  CHECK((*c.labels)[1] == 3);
  CHECK(c.values[1][0] == 4.0);
}

TEST_CASE("load_csv error cases") {
  auto dup = write_temp("ds_dup.csv", "id,t0,t1\na,1,2\na,3,4\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_csv(dup.string())),
                       doctest::Contains("duplicate id a"), std::runtime_error);
  auto ragged = write_temp("ds_rag.csv", "id,t0,t1\na,1,2\nb,3\n");
  CHECK_THROWS(static_cast<void>(load_csv(ragged.string())));
  auto junk = write_temp("ds_junk.csv", "id,t0\na,zz\n");
  CHECK_THROWS(static_cast<void>(load_csv(junk.string())));
  CHECK_THROWS(static_cast<void>(load_csv("/nonexistent/file.csv")));
}

TEST_CASE("csv round trip preserves values, mask and labels") {
  TimeSeriesCollection c = make({{1.25, -3.5, 0.1}, {2, 4, 8}});
  c.mask[0][1] = false;
  c.labels = std::vector<int>{7, 9};
  auto p = fs::temp_directory_path() / "ds_round.csv";
  save_csv(c, p.string());
  auto back = load_csv(p.string());
  CHECK(back.ids == c.ids);
  CHECK(back.values[0][0] == 1.25);
  CHECK(back.mask[0][1] == false);
  CHECK(back.values[1] == c.values[1]);
  REQUIRE(back.labels.has_value());
  CHECK(*back.labels == *c.labels);
}

TEST_CASE("fill_missing_nearest picks closest, ties earlier") {
  TimeSeriesCollection c = make({{0, 5, 0, 0, 8}});
  c.mask[0] = {false, true, false, false, true};
  long filled = 0;
  auto f = fill_missing_nearest(c, &filled);
  CHECK(filled == 3);
  CHECK(f.values[0] == Series{5, 5, 5, 8, 8});
  CHECK(f.fully_observed());
  // idempotent
  auto g = fill_missing_nearest(f);
  CHECK(g.values[0] == f.values[0]);
}

TEST_CASE("fill_missing_nearest errors on fully missing series") {
  TimeSeriesCollection c = make({{0, 0}});
  c.mask[0] = {false, false};
  CHECK_THROWS_WITH_AS(static_cast<void>(fill_missing_nearest(c)),
                       doctest::Contains("s0"), std::runtime_error);
}

TEST_CASE("drop_sparse uses strict inequality") {
  TimeSeriesCollection c = make({Series(10, 1.0), Series(10, 2.0), Series(10, 3.0)});
  for (int t = 0; t < 9; ++t) c.mask[0][static_cast<std::size_t>(t)] = false;  // 0.9
  for (int t = 0; t < 8; ++t) c.mask[1][static_cast<std::size_t>(t)] = false;  // 0.8
  auto [kept, rep] = drop_sparse(c, 0.8);
  CHECK(kept.size() == 2);
  CHECK(rep.dropped_sparse == std::vector<std::string>{"s0"});
  auto [kept1, rep1] = drop_sparse(c, 1.0);
  CHECK(kept1.size() == 3);
}

TEST_CASE("minmax_scale formula, midpoint rule and idempotence") {
  TimeSeriesCollection c = make({{2, 4, 6}, {5, 5, 5}});
  std::vector<ScaleRecord> recs;
  auto s = minmax_scale(c, 0.1, 1.0, &recs);
  CHECK(s.values[0][0] == doctest::Approx(0.1));
  CHECK(s.values[0][1] == doctest::Approx(0.55));
  CHECK(s.values[0][2] == doctest::Approx(1.0));
  CHECK(s.values[1][0] == doctest::Approx(0.55));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].min == 2.0);
  CHECK(recs[0].max == 6.0);
  auto twice = minmax_scale(s, 0.1, 1.0);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK(twice.values[0][t] == doctest::Approx(s.values[0][t]));
}

TEST_CASE("remove_outliers applies the Tukey fence to NN distances") {
  TimeSeriesCollection c = make({{0}, {1}, {2}, {100}});
  Metric m;  // euclidean
  auto d = pairwise_matrix(c, m);
  auto [kept, rep] = remove_outliers(c, d);
  CHECK(kept.size() == 3);
  CHECK(rep.dropped_outliers == std::vector<std::string>{"s3"});

  TimeSeriesCollection same = make({{5}, {5}, {5}, {5}});
  auto d2 = pairwise_matrix(same, m);
  auto [kept2, rep2] = remove_outliers(same, d2);
  CHECK(kept2.size() == 4);

  TimeSeriesCollection three = make({{0}, {1}, {2}});
  auto d3 = pairwise_matrix(three, m);
  CHECK_THROWS(static_cast<void>(remove_outliers(three, d3)));
}

TEST_CASE("slice_window cuts and drops rows with missing inside") {
  TimeSeriesCollection c = make({{1, 2, 3, 4}, {5, 6, 7, 8}});
  c.mask[1][2] = false;
  auto s = slice_window(c, 1, 2);
  CHECK(s.size() == 1);  // second series has a missing cell at index 2
  CHECK(s.values[0] == Series{2, 3});
  auto id = slice_window(make({{1, 2}}), 0, 2);
  CHECK(id.values[0] == Series{1, 2});
  CHECK_THROWS(static_cast<void>(slice_window(c, 2, 3)));
}

TEST_CASE("collection_hash tracks content") {
  TimeSeriesCollection a = make({{1, 2}, {3, 4}});
  TimeSeriesCollection b = make({{1, 2}, {3, 4}});
  CHECK(collection_hash(a) == collection_hash(b));
  b.values[1][1] = 5;
  CHECK(collection_hash(a) != collection_hash(b));
  TimeSeriesCollection c = make({{1, 2}, {3, 4}});
  c.mask[0][0] = false;
  CHECK(collection_hash(a) != collection_hash(c));
  TimeSeriesCollection d = make({{1, 2}, {3, 4}});
  d.labels = std::vector<int>{0, 1};
  CHECK(collection_hash(a) != collection_hash(d));
}

TEST_CASE("select_rows keeps order and labels") {
  TimeSeriesCollection c = make({{1}, {2}, {3}});
  c.labels = std::vector<int>{4, 5, 6};
  auto s = select_rows(c, {2, 0});
  CHECK(s.ids == std::vector<std::string>{"s2", "s0"});
  CHECK(s.values[0][0] == 3.0);
  CHECK((*s.labels)[1] == 4);
}

TEST_CASE("validate rejects structural breakage") {
  TimeSeriesCollection c = make({{1, 2}, {3, 4}});
  CHECK_NOTHROW(c.validate());
  c.ids[1] = c.ids[0];
  CHECK_THROWS(c.validate());
}
