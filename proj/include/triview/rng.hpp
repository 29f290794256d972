#pragma once

#include <cstdint>
#include <random>

namespace triview {

using rng_t = std::mt19937_64;

// splitmix64 step; used to derive decorrelated per-stream seeds from one
// master seed so independent components (orientations, subjects, noise)
// never share a generator.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix_seed(master ^ mix_seed(stream));
}

}  // namespace triview
