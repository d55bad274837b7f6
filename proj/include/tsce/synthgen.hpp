#pragma once

#include <cstdint>
#include <vector>

#include "tsce/dataset.hpp"

namespace tsce {

struct SyntheticSpec {
  int n_classes = 3;
  int n_per_class = 20;
  std::size_t length = 30;
  double noise_sigma = 0.1;
  std::vector<std::size_t> spike_positions;  // one per class, distinct
  std::uint64_t seed = 0;
};

// Class c is flat at level c * max(1, 10*sigma) plus Gaussian noise.
TimeSeriesCollection gen_blobs(const SyntheticSpec& spec);

// Noisy zero baseline with a unit spike at a class-specific position.
TimeSeriesCollection gen_spikes(const SyntheticSpec& spec);

}  // namespace tsce
