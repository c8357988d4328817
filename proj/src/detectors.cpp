#include "ddnet/detectors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ddnet {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}

Tensor quantize(const Tensor& x_hat) {
    Tensor q = x_hat;
    for (double& v : q.data) v = (v >= 0.0 ? kInvSqrt2 : -kInvSqrt2);
    return q;
}

Tensor lmmse_soft(const Tensor& y, const Tensor& H, double sigma2) {
    const Tensor ht = transpose(H);
    Tensor normal = matmul(ht, H);
    for (std::size_t i = 0; i < normal.rows(); ++i) normal(i, i) += sigma2;
    return matmul(inverse(normal), matmul(ht, y));
}

Tensor lmmse_detect(const Tensor& y, const Tensor& H, double sigma2) {
    return quantize(lmmse_soft(y, H, sigma2));
}

Tensor ml_detect(const Tensor& y, const Tensor& H) {
    const std::size_t dim = H.cols();  // 2*n_t
    check(dim % 2 == 0 && dim / 2 <= 8, "ml_detect: n_t too large for exhaustive search");
    Tensor x = Tensor::full({dim}, -kInvSqrt2);
    Tensor best = x;
    double best_cost = std::numeric_limits<double>::infinity();
    const std::uint64_t total = 1ull << dim;
    for (std::uint64_t code = 0; code < total; ++code) {
        for (std::size_t i = 0; i < dim; ++i)
            x(i) = (code >> i) & 1 ? kInvSqrt2 : -kInvSqrt2;
        const double cost = norm2sq(sub(y, matmul(H, x)));
        if (cost < best_cost) {
            best_cost = cost;
            best = x;
        }
    }
    return best;
}

int bit_errors(const Tensor& x_hat, const Tensor& x) {
    check(x_hat.size() == x.size(), "bit_errors: length mismatch");
    int errors = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool a = x_hat(i) >= 0.0;
        const bool b = x(i) >= 0.0;
        errors += (a != b) ? 1 : 0;
    }
    return errors;
}

BerPoint ber_on(const DetectorHandle& det, const std::vector<Sample>& samples, double condition) {
    check(!samples.empty(), "ber_on: empty condition");
    BerPoint pt;
    pt.condition = condition;
    for (const Sample& s : samples) {
        pt.bit_errors += bit_errors(det.detect(s), s.x);
        pt.bits_total += static_cast<long long>(s.x.size());
    }
    return pt;
}

BerReport ber_evaluate(const DetectorHandle& det, const std::string& axis,
                       const std::vector<std::pair<double, std::vector<Sample>>>& conditions) {
    check(!conditions.empty(), "ber_evaluate: no condition points");
    BerReport rep;
    rep.detector = det.name;
    rep.condition_axis = axis;
    for (const auto& [value, samples] : conditions)
        rep.points.push_back(ber_on(det, samples, value));
    return rep;
}

std::string BerReport::to_csv() const {
    std::ostringstream os;
    os << "detector," << condition_axis << ",errors,bits,ber\n";
    for (const BerPoint& p : points)
        os << detector << ',' << p.condition << ',' << p.bit_errors << ',' << p.bits_total
           << ',' << p.ber() << '\n';
    return os.str();
}

std::string BerReport::to_json() const {
    std::ostringstream os;
    os << "{\"detector\":\"" << detector << "\",\"axis\":\"" << condition_axis
       << "\",\"seed\":" << seed << ",\"points\":[";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const BerPoint& p = points[i];
        if (i) os << ',';
        os << "{\"condition\":" << p.condition << ",\"errors\":" << p.bit_errors
           << ",\"bits\":" << p.bits_total << ",\"ber\":" << p.ber() << '}';
    }
    os << "]}";
    return os.str();
}

}  // namespace ddnet
