#include "tsce/synthgen.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace tsce {

namespace {

void check_common(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("synthgen: need at least 2 classes");
  if (spec.n_per_class < 1) throw std::invalid_argument("synthgen: need at least 1 per class");
  if (spec.length < 3) throw std::invalid_argument("synthgen: length must be >= 3");
  if (spec.noise_sigma < 0) throw std::invalid_argument("synthgen: negative noise_sigma");
}

}  // namespace

TimeSeriesCollection gen_blobs(const SyntheticSpec& spec) {
  check_common(spec);
  std::mt19937 rng(static_cast<std::uint32_t>(spec.seed & 0xffffffffull));
  std::normal_distribution<double> noise(0.0, 1.0);
  double spacing = std::max(1.0, 10.0 * spec.noise_sigma);
  TimeSeriesCollection c;
  c.granularity = "synthetic";
  c.labels = std::vector<int>{};
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    double level = cls * spacing;
    for (int i = 0; i < spec.n_per_class; ++i) {
      Series row(spec.length, level);
      if (spec.noise_sigma > 0)
        for (auto& x : row) x += spec.noise_sigma * noise(rng);
      c.ids.push_back("blob_" + std::to_string(cls) + "_" + std::to_string(i));
      c.values.push_back(std::move(row));
      c.mask.emplace_back(spec.length, true);
      c.labels->push_back(cls);
    }
  }
  return c;
}

TimeSeriesCollection gen_spikes(const SyntheticSpec& spec) {
  check_common(spec);
  if (spec.spike_positions.size() != static_cast<std::size_t>(spec.n_classes))
    throw std::invalid_argument("gen_spikes: need one spike position per class");
  std::set<std::size_t> distinct(spec.spike_positions.begin(), spec.spike_positions.end());
  if (distinct.size() != spec.spike_positions.size())
    throw std::invalid_argument("gen_spikes: spike positions overlap");
  for (std::size_t p : spec.spike_positions)
    if (p >= spec.length) throw std::invalid_argument("gen_spikes: spike position out of range");
  std::mt19937 rng(static_cast<std::uint32_t>(spec.seed & 0xffffffffull));
  std::normal_distribution<double> noise(0.0, 1.0);
  TimeSeriesCollection c;
  c.granularity = "synthetic";
  c.labels = std::vector<int>{};
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    for (int i = 0; i < spec.n_per_class; ++i) {
      Series row(spec.length, 0.0);
      if (spec.noise_sigma > 0)
        for (auto& x : row) x += spec.noise_sigma * noise(rng);
      row[spec.spike_positions[static_cast<std::size_t>(cls)]] += 1.0;
      c.ids.push_back("spike_" + std::to_string(cls) + "_" + std::to_string(i));
      c.values.push_back(std::move(row));
      c.mask.emplace_back(spec.length, true);
      c.labels->push_back(cls);
    }
  }
  return c;
}

}  // namespace tsce
