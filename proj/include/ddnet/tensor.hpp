#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddnet {

/// Dense row-major tensor of 64-bit reals. Rank 1 (vectors) and rank 2
/// (matrices) are what the detectors need; scalars are shape {1}.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t n);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_scalar() const { return size() == 1; }
    double item() const;

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

/// Thrown when a matrix is singular or too ill-conditioned to invert.
struct SingularMatrixError : std::runtime_error {
    double condition_estimate;
    explicit SingularMatrixError(double cond);
};

// Plain (non-recording) linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
double trace(const Tensor& a);
double norm1(const Tensor& a);
double norm2sq(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

/// Inverse by LU with partial pivoting. Throws SingularMatrixError when the
/// 1-norm condition estimate exceeds cond_cap.
Tensor inverse(const Tensor& a, double cond_cap = 1e12);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns {eigenvalues, eigenvectors-as-columns} with A = V diag(w) V^T.
std::pair<Tensor, Tensor> sym_eig(const Tensor& a, double tol = 1e-12);

void check(bool cond, const std::string& msg);

}  // namespace ddnet
