// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pgen {

// splitmix64: tiny, fully specified, identical on every platform. The state is
// a single u64 so it serializes into checkpoints trivially. std::mt19937 plus
// std::shuffle would not give cross-platform reproducible plans.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // [0, 1) with 53 random bits.
  double unit() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// In-place Fisher-Yates with explicit draws so plans are identical across
// standard libraries.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Draw k distinct indices from [0, n) (k <= n), order irrelevant but
// deterministic: partial Fisher-Yates over an index vector.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

// A global run seed fans out to per-component sub-seeds via a stable string
// hash, so consumers stay independent of each other's draw counts.
std::uint64_t derive_seed(std::uint64_t base, std::string_view component);

}  // namespace pgen
