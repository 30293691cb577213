#include "refinery/rng.hpp"

namespace refinery {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t counter) {
    state_ = mix(seed + kGolden);
    state_ = mix(state_ + counter * kGolden);
}

std::uint64_t CounterRng::next() {
    state_ += kGolden;
    return mix(state_);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = n * ((~0ULL) / n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
}

double CounterRng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

}  // namespace refinery
