#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace chance_rl {

using Rng = std::mt19937_64;

/// Builds an independent generator for a position in a seed tree, e.g.
/// (master seed, stream, epoch, episode). Equal paths give equal streams.
inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto v : path) push(v);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Derives a child seed, so nested stages get decorrelated master seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  auto rng = make_rng(master, path);
  return rng();
}

}  // namespace chance_rl
