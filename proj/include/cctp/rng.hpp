#pragma once

#include <cstdint>
#include <string_view>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace cctp {

/// Boost distributions are used instead of <random> ones because their output
/// is identical across standard libraries, which the byte-identical artifact
/// guarantees depend on.
using Rng = boost::random::mt19937_64;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent stream for (seed, tag, index). Streams never depend on the
/// order in which other streams were consumed, so per-task work can run in
/// any order or on any number of threads.
inline Rng derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return Rng{mix64(mix64(seed ^ hash_tag(tag)) + index)};
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
    return boost::random::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform01(Rng& rng) {
    return boost::random::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double sigma) {
    return boost::random::normal_distribution<double>(0.0, sigma)(rng);
}

}  // namespace cctp
