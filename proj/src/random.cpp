#include <aspen/random.hpp>

#include <cmath>
#include <stdexcept>

namespace aspen {

uint64_t Rng::below(uint64_t n)
{
    if (n == 0)
        throw std::invalid_argument("Rng::below requires n > 0");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::exponential(double mean) { return -mean * std::log1p(-uniform01()); }

size_t Rng::weighted(std::span<const double> weights)
{
    double total = 0;
    for (double w : weights)
        total += w;
    if (!(total > 0))
        throw std::invalid_argument("weights must have a positive sum");
    const double target = uniform01() * total;
    double acc = 0;
    size_t last_positive = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0)
            continue;
        acc += weights[i];
        last_positive = i;
        if (target < acc)
            return i;
    }
    return last_positive;
}

uint64_t mix64(uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) { return mix64(mix64(seed) ^ mix64(stream + 0x5851f42d4c957f2dULL)); }

}  // namespace aspen
