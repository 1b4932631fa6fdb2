#ifndef COCKTAIL_RNG_HPP
#define COCKTAIL_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cocktail {

// Deterministic random generator (xoshiro256++ seeded through splitmix64).
// The raw stream is pure bit arithmetic, so equal seeds give equal sequences
// on every platform. Rng is a value type: copying one replays its sequence,
// which is how stochastic forward passes are frozen for gradient checks.
class Rng {
public:
    explicit Rng(uint64_t seed = 0);

    uint64_t next_u64();

    // [0, 1) with 53 random bits.
    double uniform01();

    // Uniform on [lo, hi); returns lo when lo == hi.
    double uniform(double lo, double hi);

    // 0 or 1 with P(1) = p.
    int bernoulli(double p);

    double normal(double mean, double stddev);

    // Symmetric Beta(alpha, alpha) on [0, 1].
    double beta_symmetric(double alpha);

    // Uniform integer on [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<size_t> permutation(size_t n);

private:
    double gamma(double shape);

    uint64_t state_[4];
};

} // namespace cocktail

#endif
