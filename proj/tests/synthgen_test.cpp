#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "tsce/dataset.hpp"
#include "tsce/synthgen.hpp"

using namespace tsce;

TEST_CASE("gen_blobs layout and determinism") {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.n_per_class = 4;
  spec.length = 6;
  spec.noise_sigma = 0.1;
  spec.seed = 9;
  auto a = gen_blobs(spec);
  auto b = gen_blobs(spec);
  CHECK(a.size() == 12);
  CHECK(a.length() == 6);
  REQUIRE(a.labels.has_value());
  CHECK(a.values == b.values);
  CHECK(a.ids == b.ids);
  CHECK(a.ids[0] == "blob_0_0");
  CHECK((*a.labels)[0] == 0);
  CHECK((*a.labels)[11] == 2);
  spec.seed = 10;
  auto c = gen_blobs(spec);
  CHECK(a.values != c.values);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("gen_blobs levels are exact when noise is zero") {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.n_per_class = 2;
  spec.length = 4;
  spec.noise_sigma = 0.0;
  auto c = gen_blobs(spec);
  // spacing = max(1, 10*sigma) = 1
  for (std::size_t i = 0; i < c.size(); ++i)
    for (double v : c.values[i])
      CHECK(v == static_cast<double>((*c.labels)[i]));

  spec.noise_sigma = 0.5;  // spacing becomes 5
  spec.seed = 3;
  auto wide = gen_blobs(spec);
  double lvl0 = 0, lvl2 = 0;
  for (double v : wide.values[0]) lvl0 += v;
  for (double v : wide.values[5]) lvl2 += v;
  CHECK(lvl2 / 4.0 - lvl0 / 4.0 > 5.0);  // classes 0 and 2 sit ~10 apart
}

TEST_CASE("gen_spikes puts the unit spike at the class position") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 3;
  spec.length = 10;
  spec.noise_sigma = 0.0;
  spec.spike_positions = {2, 7};
  auto c = gen_spikes(spec);
  CHECK(c.size() == 6);
  CHECK(c.ids[0] == "spike_0_0");
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t pos = spec.spike_positions[static_cast<std::size_t>((*c.labels)[i])];
    for (std::size_t t = 0; t < c.length(); ++t)
      CHECK(c.values[i][t] == (t == pos ? 1.0 : 0.0));
  }
}

TEST_CASE("synthgen validates its spec") {
  SyntheticSpec bad;
  bad.n_classes = 1;
  CHECK_THROWS(static_cast<void>(gen_blobs(bad)));
  bad = {};
  bad.noise_sigma = -0.1;
  CHECK_THROWS(static_cast<void>(gen_blobs(bad)));
  bad = {};
  bad.length = 2;
  CHECK_THROWS(static_cast<void>(gen_blobs(bad)));

  SyntheticSpec s;
  s.n_classes = 2;
  s.spike_positions = {3, 3};  // overlap
  s.length = 10;
  CHECK_THROWS(static_cast<void>(gen_spikes(s)));
  s.spike_positions = {3};  // wrong count
  CHECK_THROWS(static_cast<void>(gen_spikes(s)));
  s.spike_positions = {3, 12};  // out of range
  CHECK_THROWS(static_cast<void>(gen_spikes(s)));
}

TEST_CASE("synthetic collections round trip through csv") {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.n_per_class = 2;
  spec.length = 5;
  spec.noise_sigma = 0.2;
  spec.seed = 77;
  auto c = gen_blobs(spec);
  auto path = (std::filesystem::temp_directory_path() / "tsce_synth_roundtrip.csv").string();
  save_csv(c, path);
  auto back = load_csv(path);
  std::remove(path.c_str());
  CHECK(back.ids == c.ids);
  REQUIRE(back.labels.has_value());
  CHECK(*back.labels == *c.labels);
  REQUIRE(back.values.size() == c.values.size());
  for (std::size_t i = 0; i < c.values.size(); ++i)
    for (std::size_t t = 0; t < c.length(); ++t)
      CHECK(back.values[i][t] == doctest::Approx(c.values[i][t]).epsilon(1e-15));
}
