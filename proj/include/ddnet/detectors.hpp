#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddnet/channel.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

/// Uniform harness over the classical and learned detectors.
struct DetectorHandle {
    std::string name;
    std::function<Tensor(const Sample&)> detect;  // returns estimate x_hat, length 2*n_t
    std::function<long long(const Sample&)> flops;  // optional accounting hook
};

struct BerPoint {
    double condition = 0.0;
    long long bit_errors = 0;
    long long bits_total = 0;
    double ber() const { return bits_total ? double(bit_errors) / double(bits_total) : 0.0; }
};

struct BerReport {
    std::string detector;
    std::string condition_axis;  // "snr_db" | "n_r" | "rho"
    std::vector<BerPoint> points;
    std::uint64_t seed = 0;

    std::string to_csv() const;
    std::string to_json() const;
};

/// Per-component nearest point of {±1/√2}; exact zero maps to +1/√2.
Tensor quantize(const Tensor& x_hat);

/// x_hat = (H^T H + sigma2 I)^{-1} H^T y. The regularizer equals the
/// complex-domain sigma_n^2 (real-domain noise variance sigma2/2 divided by
/// the per-real-component symbol energy 1/2).
Tensor lmmse_soft(const Tensor& y, const Tensor& H, double sigma2);
Tensor lmmse_detect(const Tensor& y, const Tensor& H, double sigma2);

/// Exhaustive ML search over all 4^{n_t} constellation vectors; refuses n_t > 8.
Tensor ml_detect(const Tensor& y, const Tensor& H);

/// Hamming distance of hard decisions; equals ||Q[x]-Q[x_hat]||_1 / sqrt(2).
int bit_errors(const Tensor& x_hat, const Tensor& x);

BerPoint ber_on(const DetectorHandle& det, const std::vector<Sample>& samples,
                double condition = 0.0);

BerReport ber_evaluate(const DetectorHandle& det, const std::string& axis,
                       const std::vector<std::pair<double, std::vector<Sample>>>& conditions);

}  // namespace ddnet
