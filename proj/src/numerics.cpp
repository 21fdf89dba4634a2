#include "r3split/numerics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace r3split {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        std::ostringstream os;
        os << "matmul: shape mismatch " << a.rows << "x" << a.cols << " * " << b.rows
           << "x" << b.cols;
        throw std::invalid_argument(os.str());
    }
    Matrix out(a.rows, b.cols, 0.0);
    // ikj order: streams over contiguous rows of b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    check_finite(out, "matmul result");
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
    return out;
}

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            std::ostringstream os;
            os << what << ": non-finite value " << x;
            throw std::domain_error(os.str());
        }
    }
}

void check_finite(const Matrix& m, const char* what) {
    check_finite(std::span<const double>(m.data), what);
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace

RngState::RngState(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t RngState::u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngState::uniform() {
    return static_cast<double>(u64() >> 11) * 0x1.0p-53;
}

double RngState::uniform_open() {
    return (static_cast<double>(u64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngState::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double RngState::laplace(double location, double scale) {
    if (!(scale > 0.0)) {
        throw std::invalid_argument("laplace: scale must be > 0, got " +
                                    std::to_string(scale));
    }
    const double u = uniform_open() - 0.5; // (-1/2, 1/2)
    const double sign = (u < 0.0) ? -1.0 : 1.0;
    return location - scale * sign * std::log(1.0 - 2.0 * std::abs(u));
}

RngState RngState::fork(std::uint64_t tag) const {
    std::uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    return RngState(splitmix64(sm));
}

} // namespace r3split
