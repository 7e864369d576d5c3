#pragma once

#include <cstdint>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace safetune {

using Rng = boost::random::mt19937_64;

// Independent streams derived from one master seed. Adding a stream or
// changing how many draws one concern makes never shifts another.
enum class Stream : std::uint64_t {
    plant_noise = 1,
    pso = 2,
    cbo = 3,
    calibration = 4,
    oracle = 5,
};

std::uint64_t splitmix64(std::uint64_t x);

// seed = splitmix64(splitmix64(master ^ tag * 0x9E37...) + index)
std::uint64_t split_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return Rng(split_seed(master, stream, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
    return boost::random::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace safetune
