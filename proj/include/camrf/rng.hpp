#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace camrf {

using Rng = std::mt19937_64;

// Independent substream for (master seed, key...). Every stochastic step
// derives its generator this way, e.g. {seed, tree_index} for training or
// {seed, trial} for programming noise, so results do not depend on the
// order in which parallel work is scheduled.
inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace camrf
