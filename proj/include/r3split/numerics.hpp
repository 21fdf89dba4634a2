#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace r3split {

// Dense row-major matrix of doubles. The only tensor type in the project;
// vectors are 1xN or plain std::vector<double> depending on context.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix identity(std::size_t n);
};

// Throws std::invalid_argument with a shape report on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Throws std::domain_error if any entry is NaN or infinite.
void check_finite(const Matrix& m, const char* what);
void check_finite(std::span<const double> v, const char* what);

// Deterministic explicit-state generator (xoshiro256++ seeded via splitmix64).
// One instance per party; identical seed + identical call sequence gives an
// identical sample sequence on every platform.
class RngState {
public:
    explicit RngState(std::uint64_t seed);

    std::uint64_t u64();

    // Uniform on [0,1).
    double uniform();
    // Uniform on (0,1); safe as input to logs.
    double uniform_open();
    // Standard normal via Box-Muller; the spare draw is cached in the state.
    double normal();
    // Laplace(location, scale) by inverse CDF. Throws on scale <= 0.
    double laplace(double location, double scale);

    // Independent stream derived from the original seed and a tag. Streams
    // with distinct tags are decorrelated regardless of draw history.
    RngState fork(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

} // namespace r3split
