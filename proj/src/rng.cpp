#include "safetune/rng.hpp"

namespace safetune {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t split_seed(std::uint64_t master, Stream stream, std::uint64_t index) {
    const auto tag = static_cast<std::uint64_t>(stream);
    return splitmix64(splitmix64(master ^ (tag * 0x9E3779B97F4A7C15ULL)) + index);
}

}  // namespace safetune
