#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace pxnet {

using Rng = std::mt19937_64;

/// Generator keyed by a seed and a list of stream counters, so replicate k of
/// cell c always sees the same stream regardless of execution order.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace pxnet
