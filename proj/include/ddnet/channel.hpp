#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ddnet/rng.hpp"
#include "ddnet/tensor.hpp"

namespace ddnet {

/// Complex matrix as separate real/imaginary parts.
struct CMat {
    Tensor re, im;
    std::size_t rows() const { return re.rows(); }
    std::size_t cols() const { return re.cols(); }
};

CMat cmatmul(const CMat& a, const CMat& b);

struct SystemConfig {
    int n_t = 4;
    int n_r_min = 4, n_r_max = 8;
    double snr_db_min = -5.0, snr_db_max = 15.0;
    double rho_min = 0.0, rho_max = 0.9;

    void validate() const;
};

/// Per-client draw ranges: a length-0.2 rho subinterval and a length-5 dB SNR
/// subinterval inside the global ranges; N_r is drawn per sample.
struct ClientProfile {
    int client_id = 0;
    double rho_lo = 0.0, rho_hi = 0.0;
    double snr_lo = 0.0, snr_hi = 0.0;
    int n_r_min = 1, n_r_max = 1;
};

/// One real-domain detection instance y = Hx + n.
struct Sample {
    Tensor y;                   // length 2*n_r
    Tensor H;                   // 2*n_r x 2*n_t, block structure [[Re,-Im],[Im,Re]]
    double sigma2 = 0.0;        // complex-domain noise variance
    Tensor x;                   // length 2*n_t, components in {±1/√2}
    std::vector<std::uint8_t> bits;  // 2*n_t hard bits
    int n_r = 0;
    double rho = 0.0;
    double snr_db = 0.0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::string origin = "pooled";
};

/// Exponential-type correlation [R]_{ij} = rho^{(i-j)^2}.
Tensor correlation_matrix(std::size_t n, double rho);

/// Principal square root of a symmetric PSD matrix; roundoff-negative
/// eigenvalues are clamped to zero.
Tensor matrix_sqrt(const Tensor& r);

/// Correlated Rayleigh channel sqrt(R_r) H_g sqrt(R_t), elements of H_g
/// i.i.d. CN(0, 1/n_r).
CMat generate_channel(int n_t, int n_r, double rho, Rng& rng);

Tensor realify(const CMat& m);
Tensor realify_vec(const std::vector<std::complex<double>>& v);

Tensor qpsk_modulate(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> qpsk_demodulate(const Tensor& x_hat);

/// Total-received-signal-power over total-noise-power convention:
/// sigma_n^2 = N_t E_s / (N_r 10^{snr/10}).
double snr_to_sigma2(double snr_db, int n_t, int n_r);

Sample generate_sample(int n_t, int n_r, double rho, double snr_db, Rng& rng);
Sample generate_sample(int n_t, const ClientProfile& profile, Rng& rng);

std::vector<ClientProfile> make_client_profiles(const SystemConfig& cfg, int count, Rng& rng);
Dataset generate_client_dataset(int n_t, const ClientProfile& profile, int count, Rng& rng);
Dataset pool(const std::vector<Dataset>& datasets, Rng& rng);

// Versioned little-endian binary container.
void save_dataset(const Dataset& ds, int n_t, const std::string& path);
Dataset load_dataset(const std::string& path, int* n_t_out = nullptr);

}  // namespace ddnet
