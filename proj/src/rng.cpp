// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/rng.hpp"

namespace pgen {

std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (k > n) k = n;
  for (int i = 0; i < k; ++i) {
    std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view component) {
  // FNV-1a over the component name, then mixed with the base seed.
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : component) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  Rng mixer(base ^ h);
  return mixer.next_u64();
}

}  // namespace pgen
