#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsce {

using Series = std::vector<double>;
using Matrix = std::vector<Series>;

// 64-bit FNV-1a over raw bytes; used for cache keys and sub-seed derivation.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a_str(const std::string& s,
                        std::uint64_t h = 14695981039346656037ull);

// Deterministic stage/sub-seed derivation from a master seed and a name.
std::uint64_t derive_seed(std::uint64_t master, const std::string& name);

// Shortest round-trip decimal form of a double (stable artifact formatting).
std::string format_double(double v);

// Strict double parse of a whole token; returns false on any trailing junk.
bool parse_double(const std::string& s, double& out);

double mean_of(const Series& x);
double variance_pop(const Series& x);

// Linear-interpolation quantile (R type 7) over an already sorted vector.
double quantile_sorted(const Series& sorted, double q);

}  // namespace tsce
