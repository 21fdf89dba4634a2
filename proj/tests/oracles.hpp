// Independent reference implementations used by the tests. These stay
// deliberately naive (straight loops, no shared code paths with the library
// beyond basic types) so they can serve as oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "r3split/nn.hpp"
#include "r3split/numerics.hpp"

namespace oracles {

using r3split::Matrix;

// Plain ijk triple loop.
inline Matrix matmul_naive(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline double laplace_cdf(double x, double location, double scale) {
    const double z = (x - location) / scale;
    return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}

// Two-sided Kolmogorov-Smirnov statistic against a CDF.
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

inline std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks_with_ties(a), ranks_with_ties(b));
}

// Mean batch loss of a model copy; the finite-difference workhorse.
inline double model_loss(const r3split::nn::SequentialModel& model, const Matrix& batch,
                         const std::vector<int>& labels) {
    r3split::nn::SequentialModel copy = model;
    return r3split::nn::softmax_cross_entropy(copy.forward(batch, /*training=*/true), labels)
        .loss;
}

// Central finite differences over every parameter.
inline std::vector<double> fd_gradients(const r3split::nn::SequentialModel& model,
                                        const Matrix& batch, const std::vector<int>& labels,
                                        double h = 1e-6) {
    std::vector<double> grads;
    r3split::nn::SequentialModel probe = model;
    auto slices = probe.param_slices();
    for (auto& s : slices) {
        for (std::size_t i = 0; i < s.size; ++i) {
            const double saved = s.value[i];
            s.value[i] = saved + h;
            const double up = model_loss(probe, batch, labels);
            s.value[i] = saved - h;
            const double down = model_loss(probe, batch, labels);
            s.value[i] = saved;
            grads.push_back((up - down) / (2.0 * h));
        }
    }
    return grads;
}

inline std::vector<double> analytic_gradients(r3split::nn::SequentialModel& model,
                                              const Matrix& batch,
                                              const std::vector<int>& labels) {
    model.zero_grads();
    const auto out = model.forward(batch, /*training=*/true);
    const auto loss = r3split::nn::softmax_cross_entropy(out, labels);
    model.backward(loss.grad);
    std::vector<double> grads;
    for (const auto& s : model.param_slices())
        for (std::size_t i = 0; i < s.size; ++i) grads.push_back(s.grad[i]);
    return grads;
}

// Relative error with an absolute floor, the standard gradient-check gauge.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace oracles
