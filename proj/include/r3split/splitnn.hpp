#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "r3split/numerics.hpp"

namespace r3split::splitnn {

// Vertical feature split: disjoint column index sets for the two parties.
// With padding, each view keeps the full width and zero-fills the columns it
// does not own.
struct PartitionSpec {
    std::vector<std::size_t> guest_indices;
    std::vector<std::size_t> host_indices;
    bool padding = false;

    // [0, guest_width) for the guest, the rest for the host.
    static PartitionSpec contiguous(std::size_t total_width, std::size_t guest_width,
                                    bool padding = false);

    void validate(std::size_t total_width) const; // throws on overlap/coverage gaps
};

std::pair<Matrix, Matrix> vertical_partition(const Matrix& features, const PartitionSpec& spec);

// Inverse of a non-padded partition; used to check the partition identity.
Matrix recombine(const Matrix& guest_view, const Matrix& host_view, const PartitionSpec& spec,
                 std::size_t total_width);

enum class MergeStrategy { concat, max, sum, avg, mul, min };

MergeStrategy merge_from_string(const std::string& s);
std::string to_string(MergeStrategy m);

// Captures what the backward pass of a merge needs.
struct MergeCache {
    Matrix guest;
    Matrix host;
};

Matrix merge_forward(const Matrix& guest, const Matrix& host, MergeStrategy strategy,
                     MergeCache& cache);

// Splits the upstream gradient into (guest side, host side).
std::pair<Matrix, Matrix> merge_backward(const Matrix& grad, MergeStrategy strategy,
                                         const MergeCache& cache);

std::size_t merged_width(std::size_t guest_width, std::size_t host_width,
                         MergeStrategy strategy);

} // namespace r3split::splitnn
