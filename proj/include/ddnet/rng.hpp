#pragma once

#include <complex>
#include <cstdint>

namespace ddnet {

/// Counter-based, splittable pseudo-random generator (splitmix64 core).
/// Identical seed produces an identical draw sequence on every platform;
/// split() derives an independent stream from a pair of labels, so each
/// federated client and epoch gets its own reproducible stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b);
    int uniform_int(int lo, int hi);  // inclusive
    double gaussian(double mu, double sigma);
    bool bernoulli(double p);
    /// Complex sample with total variance v: real and imaginary parts each N(0, v/2).
    std::complex<double> complex_gaussian(double variance);

    /// Independent stream keyed by (a, b), e.g. (client_id, epoch).
    Rng split(std::uint64_t a, std::uint64_t b = 0) const;

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    std::uint64_t state_;
};

}  // namespace ddnet
