#include "ddnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ddnet {

double Rng::uniform(double a, double b) {
    if (a > b) throw std::invalid_argument("uniform: a > b");
    return a + (b - a) * uniform();
}

int Rng::uniform_int(int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + int(next_u64() % span);
}

double Rng::gaussian(double mu, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian: sigma < 0");
    // Box-Muller; draws two uniforms per call so the stream stays counter-aligned.
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

bool Rng::bernoulli(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli: p outside [0,1]");
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
}

std::complex<double> Rng::complex_gaussian(double variance) {
    if (variance < 0.0) throw std::invalid_argument("complex_gaussian: variance < 0");
    const double s = std::sqrt(variance / 2.0);
    const double re = gaussian(0.0, s);
    const double im = gaussian(0.0, s);
    return {re, im};
}

Rng Rng::split(std::uint64_t a, std::uint64_t b) const {
    std::uint64_t h = state_;
    h = mix(h ^ (a + 0x9e3779b97f4a7c15ull));
    h = mix(h ^ (b + 0xd1b54a32d192ed03ull));
    return Rng(h);
}

}  // namespace ddnet
