#pragma once

#include <cstdint>

namespace refinery {

// Counter-based deterministic RNG (splitmix64 core).
//
// A stream is fully determined by (seed, counter), so independent draws for
// sample i never depend on how many draws earlier samples consumed.  This is
// what keeps per-sample randomization stable under parallel execution.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t counter);

    std::uint64_t next();

    // Unbiased draw in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Uniform double in [0, 1).
    double uniform();

private:
    std::uint64_t state_;
};

}  // namespace refinery
