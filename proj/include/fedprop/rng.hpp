#pragma once

#include <cstdint>
#include <random>

namespace fedprop {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives independent streams from one master seed.  Used to give every
// (round, client) pair and every pipeline stage its own generator, so that
// parallel execution order cannot change what anyone draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ 0x517cc1b727220a95ULL * stream) + index);
}

}  // namespace fedprop
