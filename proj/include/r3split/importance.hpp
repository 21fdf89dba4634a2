#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "r3split/nn.hpp"
#include "r3split/numerics.hpp"

namespace r3split::importance {

// First-order importance of one parameter: (grad * value)^2.
double taylor_importance(double param_grad, double param_value);

// Removal importance of parameter j (flat index across the model's parameter
// slices): zero it out, re-evaluate the loss, square the difference. Slow by
// construction; used as the reference the Taylor estimate is checked against.
double removal_importance(const nn::SequentialModel& model, const Matrix& batch,
                          std::span<const int> labels, std::size_t flat_index);

// Importance of cut-layer neuron j from the parameters feeding it: the j-th
// weight row plus the j-th bias of the producing linear layer.
double neuron_importance(const Matrix& weights, const Matrix& weight_grads,
                         std::span<const double> bias, std::span<const double> bias_grads,
                         std::size_t j);

// All rows at once: vector of length weights.rows.
std::vector<double> layer_neuron_importances(const Matrix& weights, const Matrix& weight_grads,
                                             std::span<const double> bias,
                                             std::span<const double> bias_grads);

// Column view: importance of input neuron j of a consuming layer, summed over
// the j-th weight column. This is the host-side reading of "parameters
// directly connected to the j-th neuron" at the cut.
std::vector<double> layer_input_importances(const Matrix& weights, const Matrix& weight_grads);

// Cumulative per-neuron importance across training. Each update folds a
// fresh per-neuron sum of Taylor importances into a running mean whose
// denominator is the global update count (1, 2, 3, ...). Counters advance
// per update; epochs advance every n_t updates. Requires T mod n_t == 0.
class ImportanceTracker {
public:
    ImportanceTracker(std::size_t width, std::size_t iterations_per_epoch,
                      std::size_t max_iterations);

    void update(std::span<const double> fresh);

    const std::vector<double>& values() const { return u_; }
    std::size_t width() const { return u_.size(); }
    std::size_t epoch() const { return epoch_; }
    std::size_t updates() const { return updates_; }
    std::size_t iterations_per_epoch() const { return iters_per_epoch_; }

    // One CSV row per (epoch, neuron) with the value of U at each epoch end.
    std::string history_csv() const;

private:
    std::vector<double> u_;
    std::size_t iters_per_epoch_;
    std::size_t max_iterations_;
    std::size_t epoch_ = 1;         // q
    std::size_t iter_in_epoch_ = 0; // t within the current epoch
    std::size_t updates_ = 0;       // global denominator
    std::vector<std::vector<double>> epoch_history_;
};

// Per-neuron budgets eps_j = eps_unit * U_j.
struct FeatureBudget {
    std::vector<double> eps_j;
    double eps_unit;
    double eps_total; // sum of eps_j
};

FeatureBudget allocate_feature_budgets(std::span<const double> importance, double eps_unit);

} // namespace r3split::importance
