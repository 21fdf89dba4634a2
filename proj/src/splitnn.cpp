#include "r3split/splitnn.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace r3split::splitnn {

PartitionSpec PartitionSpec::contiguous(std::size_t total_width, std::size_t guest_width,
                                        bool padding) {
    if (guest_width == 0 || guest_width >= total_width)
        throw std::invalid_argument("partition: guest width must be in (0, total)");
    PartitionSpec spec;
    spec.padding = padding;
    spec.guest_indices.resize(guest_width);
    std::iota(spec.guest_indices.begin(), spec.guest_indices.end(), 0);
    spec.host_indices.resize(total_width - guest_width);
    std::iota(spec.host_indices.begin(), spec.host_indices.end(), guest_width);
    return spec;
}

void PartitionSpec::validate(std::size_t total_width) const {
    std::vector<std::uint8_t> seen(total_width, 0);
    auto mark = [&](const std::vector<std::size_t>& idx, const char* side) {
        for (std::size_t i : idx) {
            if (i >= total_width)
                throw std::invalid_argument(std::string("partition: ") + side + " index " +
                                            std::to_string(i) + " out of range");
            if (seen[i])
                throw std::invalid_argument("partition: index " + std::to_string(i) +
                                            " assigned to both parties");
            seen[i] = 1;
        }
    };
    mark(guest_indices, "guest");
    mark(host_indices, "host");
    if (!padding) {
        for (std::size_t i = 0; i < total_width; ++i)
            if (!seen[i])
                throw std::invalid_argument("partition: column " + std::to_string(i) +
                                            " unassigned with padding off");
    }
}

std::pair<Matrix, Matrix> vertical_partition(const Matrix& features, const PartitionSpec& spec) {
    spec.validate(features.cols);
    auto take = [&](const std::vector<std::size_t>& idx) {
        if (spec.padding) {
            Matrix view(features.rows, features.cols, 0.0);
            for (std::size_t r = 0; r < features.rows; ++r)
                for (std::size_t i : idx) view(r, i) = features(r, i);
            return view;
        }
        Matrix view(features.rows, idx.size());
        for (std::size_t r = 0; r < features.rows; ++r)
            for (std::size_t c = 0; c < idx.size(); ++c) view(r, c) = features(r, idx[c]);
        return view;
    };
    return {take(spec.guest_indices), take(spec.host_indices)};
}

Matrix recombine(const Matrix& guest_view, const Matrix& host_view, const PartitionSpec& spec,
                 std::size_t total_width) {
    if (spec.padding) throw std::invalid_argument("recombine: only defined for non-padded views");
    if (guest_view.rows != host_view.rows)
        throw std::invalid_argument("recombine: row count mismatch");
    Matrix out(guest_view.rows, total_width, 0.0);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < spec.guest_indices.size(); ++c)
            out(r, spec.guest_indices[c]) = guest_view(r, c);
        for (std::size_t c = 0; c < spec.host_indices.size(); ++c)
            out(r, spec.host_indices[c]) = host_view(r, c);
    }
    return out;
}

MergeStrategy merge_from_string(const std::string& s) {
    if (s == "concat") return MergeStrategy::concat;
    if (s == "max") return MergeStrategy::max;
    if (s == "sum") return MergeStrategy::sum;
    if (s == "avg") return MergeStrategy::avg;
    if (s == "mul") return MergeStrategy::mul;
    if (s == "min") return MergeStrategy::min;
    throw std::invalid_argument("unknown merge strategy '" + s + "'");
}

std::string to_string(MergeStrategy m) {
    switch (m) {
    case MergeStrategy::concat: return "concat";
    case MergeStrategy::max: return "max";
    case MergeStrategy::sum: return "sum";
    case MergeStrategy::avg: return "avg";
    case MergeStrategy::mul: return "mul";
    case MergeStrategy::min: return "min";
    }
    return "?";
}

std::size_t merged_width(std::size_t guest_width, std::size_t host_width,
                         MergeStrategy strategy) {
    if (strategy == MergeStrategy::concat) return guest_width + host_width;
    if (guest_width != host_width)
        throw std::invalid_argument("merge: element-wise strategy needs equal widths, got " +
                                    std::to_string(guest_width) + " and " +
                                    std::to_string(host_width));
    return guest_width;
}

Matrix merge_forward(const Matrix& guest, const Matrix& host, MergeStrategy strategy,
                     MergeCache& cache) {
    if (guest.rows != host.rows)
        throw std::invalid_argument("merge: batch size mismatch");
    const std::size_t width = merged_width(guest.cols, host.cols, strategy);
    cache.guest = guest;
    cache.host = host;

    Matrix out(guest.rows, width);
    if (strategy == MergeStrategy::concat) {
        for (std::size_t r = 0; r < guest.rows; ++r) {
            for (std::size_t c = 0; c < guest.cols; ++c) out(r, c) = guest(r, c);
            for (std::size_t c = 0; c < host.cols; ++c) out(r, guest.cols + c) = host(r, c);
        }
        return out;
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double a = guest.data[i];
        const double b = host.data[i];
        switch (strategy) {
        case MergeStrategy::max: out.data[i] = std::max(a, b); break;
        case MergeStrategy::sum: out.data[i] = a + b; break;
        case MergeStrategy::avg: out.data[i] = 0.5 * (a + b); break;
        case MergeStrategy::mul: out.data[i] = a * b; break;
        case MergeStrategy::min: out.data[i] = std::min(a, b); break;
        default: break;
        }
    }
    return out;
}

std::pair<Matrix, Matrix> merge_backward(const Matrix& grad, MergeStrategy strategy,
                                         const MergeCache& cache) {
    const Matrix& guest = cache.guest;
    const Matrix& host = cache.host;
    if (strategy == MergeStrategy::concat) {
        if (grad.cols != guest.cols + host.cols)
            throw std::invalid_argument("merge backward: gradient width mismatch");
        Matrix ga(grad.rows, guest.cols), gb(grad.rows, host.cols);
        for (std::size_t r = 0; r < grad.rows; ++r) {
            for (std::size_t c = 0; c < guest.cols; ++c) ga(r, c) = grad(r, c);
            for (std::size_t c = 0; c < host.cols; ++c) gb(r, c) = grad(r, guest.cols + c);
        }
        return {std::move(ga), std::move(gb)};
    }
    if (!grad.same_shape(guest))
        throw std::invalid_argument("merge backward: gradient shape mismatch");
    Matrix ga(grad.rows, grad.cols), gb(grad.rows, grad.cols);
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        const double g = grad.data[i];
        const double a = guest.data[i];
        const double b = host.data[i];
        switch (strategy) {
        case MergeStrategy::max:
            // Ties go to the guest side.
            ga.data[i] = a >= b ? g : 0.0;
            gb.data[i] = a >= b ? 0.0 : g;
            break;
        case MergeStrategy::min:
            ga.data[i] = a <= b ? g : 0.0;
            gb.data[i] = a <= b ? 0.0 : g;
            break;
        case MergeStrategy::sum:
            ga.data[i] = g;
            gb.data[i] = g;
            break;
        case MergeStrategy::avg:
            ga.data[i] = 0.5 * g;
            gb.data[i] = 0.5 * g;
            break;
        case MergeStrategy::mul:
            ga.data[i] = g * b;
            gb.data[i] = g * a;
            break;
        default: break;
        }
    }
    return {std::move(ga), std::move(gb)};
}

} // namespace r3split::splitnn
