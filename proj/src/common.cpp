#include "tsce/common.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

namespace tsce {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a_str(const std::string& s, std::uint64_t h) {
  return fnv1a(s.data(), s.size(), h);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& name) {
  std::uint64_t h = fnv1a(&master, sizeof(master));
  return fnv1a_str(name, h);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc())
    throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  // std::from_chars rejects a leading '+', allow it for CSV friendliness
  if (b != e && *b == '+') ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && b != e;
}

double mean_of(const Series& x) {
  if (x.empty()) throw std::invalid_argument("mean_of: empty series");
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance_pop(const Series& x) {
  double m = mean_of(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

double quantile_sorted(const Series& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty input");
  if (q < 0 || q > 1) throw std::invalid_argument("quantile_sorted: q outside [0,1]");
  double pos = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace tsce
