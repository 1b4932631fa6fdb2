#include "cocktail/rng.hpp"

#include "cocktail/errors.hpp"

#include <cmath>

namespace cocktail {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

} // namespace

Rng::Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    require(lo <= hi, "Rng::uniform: lo > hi");
    return lo + uniform01() * (hi - lo);
}

int Rng::bernoulli(double p) {
    require(p >= 0.0 && p <= 1.0, "Rng::bernoulli: p outside [0,1]");
    return uniform01() < p ? 1 : 0;
}

double Rng::normal(double mean, double stddev) {
    require(stddev >= 0.0, "Rng::normal: negative stddev");
    // Box-Muller without caching the second deviate; two uniforms per call
    // keeps the draw count a pure function of the call sequence.
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double shape) {
    // Marsaglia-Tsang squeeze; shapes below one are boosted through
    // G(a) = G(a+1) * U^(1/a).
    if (shape < 1.0) {
        const double u = uniform01();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal(0.0, 1.0);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta_symmetric(double alpha) {
    require(alpha > 0.0, "Rng::beta_symmetric: alpha must be positive");
    const double g1 = gamma(alpha);
    const double g2 = gamma(alpha);
    const double sum = g1 + g2;
    if (sum <= 0.0) {
        // Both gamma draws underflowed (tiny alpha); the limiting law is
        // a fair coin on {0, 1}.
        return static_cast<double>(bernoulli(0.5));
    }
    return g1 / sum;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    require(lo <= hi, "Rng::uniform_int: lo > hi");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // Multiply-shift bounded draw; bias is below 2^-64 per call.
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(span);
    return lo + static_cast<int64_t>(wide >> 64);
}

std::vector<size_t> Rng::permutation(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace cocktail
