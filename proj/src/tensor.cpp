#include "ddnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ddnet {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    check(n == data.size(), "tensor data length does not match shape");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = 1;
    for (std::size_t dim : shape) n *= dim;
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    check(rank() == 2, "rows() requires a matrix");
    return shape[0];
}

std::size_t Tensor::cols() const {
    check(rank() == 2, "cols() requires a matrix");
    return shape[1];
}

double Tensor::item() const {
    check(is_scalar(), "item() requires a scalar tensor");
    return data[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

SingularMatrixError::SingularMatrixError(double cond)
    : std::runtime_error("matrix is singular or ill-conditioned (condition estimate " +
                         std::to_string(cond) + ")"),
      condition_estimate(cond) {}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2, "matmul: left operand must be a matrix");
    if (b.rank() == 1) {
        check(a.cols() == b.size(), "matmul: shape mismatch");
        Tensor out = Tensor::zeros({a.rows()});
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k);
            out(i) = acc;
        }
        return out;
    }
    check(b.rank() == 2 && a.cols() == b.rows(), "matmul: shape mismatch");
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

Tensor transpose(const Tensor& a) {
    check(a.rank() == 2, "transpose: matrix required");
    Tensor out = Tensor::zeros({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "add: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "sub: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "hadamard: shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v *= c;
    return out;
}

double trace(const Tensor& a) {
    check(a.rank() == 2 && a.rows() == a.cols(), "trace: square matrix required");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, i);
    return acc;
}

double norm1(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data) acc += std::abs(v);
    return acc;
}

double norm2sq(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return acc;
}

double dot(const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), "dot: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

namespace {

// 1-norm of a square matrix (max column sum).
double matrix_norm1(const Tensor& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) col += std::abs(a(i, j));
        best = std::max(best, col);
    }
    return best;
}

}  // namespace

Tensor inverse(const Tensor& a, double cond_cap) {
    check(a.rank() == 2 && a.rows() == a.cols(), "inverse: square matrix required");
    const std::size_t n = a.rows();
    Tensor lu = a;
    Tensor inv = Tensor::identity(n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
        if (std::abs(lu(pivot, col)) == 0.0)
            throw SingularMatrixError(std::numeric_limits<double>::infinity());
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(lu.data[pivot * n + j], lu.data[col * n + j]);
                std::swap(inv.data[pivot * n + j], inv.data[col * n + j]);
            }
        }
        const double d = lu(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            lu(col, j) /= d;
            inv(col, j) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = lu(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                lu(r, j) -= f * lu(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    const double cond = matrix_norm1(a) * matrix_norm1(inv);
    if (!std::isfinite(cond) || cond > cond_cap) throw SingularMatrixError(cond);
    return inv;
}

std::pair<Tensor, Tensor> sym_eig(const Tensor& a, double tol) {
    check(a.rank() == 2 && a.rows() == a.cols(), "sym_eig: square matrix required");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            check(std::abs(a(i, j) - a(j, i)) < 1e-10 * (1.0 + std::abs(a(i, j))),
                  "sym_eig: matrix is not symmetric");

    Tensor m = a;
    Tensor v = Tensor::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
        if (off < tol * tol) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(m(p, q)) < 1e-300) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    Tensor w = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) w(i) = m(i, i);
    return {w, v};
}

}  // namespace ddnet
