#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

namespace mfcmc {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` under the named derivation path `tag`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return mix_seed(mix_seed(seed ^ mix_seed(tag)) + index);
}

// True when a sum of n masses is 1 up to round-off. Such totals are left
// alone so that renormalizing twice never moves a weight.
inline bool is_unit_total(double sum, std::size_t n) {
  const double slack = static_cast<double>(std::max<std::size_t>(n, 64)) * std::numeric_limits<double>::epsilon();
  return std::abs(sum - 1.0) <= slack;
}

// Runs body(i) for i in [0, n) on up to `threads` workers. Work items are
// independent; results must be written to per-index slots.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mfcmc
