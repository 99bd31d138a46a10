#pragma once

// Seedable keyed pseudo-random streams built on SplitMix64: each draw is
// a pure mix of (seed, stream, counter), so identical seeds reproduce
// identical streams on any platform and differently keyed streams never
// collide regardless of evaluation order. Normal deviates use Box-Muller
// with the sine partner cached.

#include <cstdint>
#include <vector>

#include "tadfkd/autodiff.hpp"

namespace tadfkd {

// Well-known stream keys. Anything derived from the same seed but a
// different key is an independent stream.
namespace streams {
inline constexpr std::uint64_t kDataCenters = 0x11;
inline constexpr std::uint64_t kDataNoise = 0x12;
inline constexpr std::uint64_t kDataShuffle = 0x13;
inline constexpr std::uint64_t kDataTemplates = 0x14;
inline constexpr std::uint64_t kInitTeacher = 0x21;
inline constexpr std::uint64_t kInitStudent = 0x22;
inline constexpr std::uint64_t kInitGenerator = 0x23;
inline constexpr std::uint64_t kLatent = 0x31;
inline constexpr std::uint64_t kTrainShuffle = 0x32;
inline constexpr std::uint64_t kDiversity = 0x33;
} // namespace streams

class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    double next_double();        // uniform [0, 1)
    double next_normal();        // standard normal, Box-Muller
    double uniform(double lo, double hi);
    int next_int(int bound);     // uniform {0, ..., bound-1}

    Tensor normal_tensor(std::vector<int> shape);

    // Fisher-Yates over indices 0..n-1.
    std::vector<int> permutation(int n);

private:
    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace tadfkd
