#pragma once

// Seeded randomness with fully specified conversions. The engine is
// std::mt19937_64, whose output sequence is fixed by the standard; the
// distribution helpers below avoid the implementation-defined std::
// distributions so that draws match across standard libraries.

#include <cstdint>
#include <random>
#include <span>

namespace aspen {

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0, n) without modulo bias. n > 0.
    uint64_t below(uint64_t n);
    double exponential(double mean);
    // Index drawn with probability proportional to weights[i].
    size_t weighted(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

// Stateless 64-bit mixer (splitmix64 finaliser).
uint64_t mix64(uint64_t x);
uint64_t mix_seed(uint64_t seed, uint64_t stream);

}  // namespace aspen
