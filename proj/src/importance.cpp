#include "r3split/importance.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace r3split::importance {

double taylor_importance(double param_grad, double param_value) {
    const double t = param_grad * param_value;
    return t * t;
}

double removal_importance(const nn::SequentialModel& model, const Matrix& batch,
                          std::span<const int> labels, std::size_t flat_index) {
    nn::SequentialModel base = model;
    const double loss_full =
        nn::softmax_cross_entropy(base.forward(batch, /*training=*/true), labels).loss;

    nn::SequentialModel ablated = model;
    auto slices = ablated.param_slices();
    std::size_t off = 0;
    bool found = false;
    for (auto& s : slices) {
        if (flat_index < off + s.size) {
            s.value[flat_index - off] = 0.0;
            found = true;
            break;
        }
        off += s.size;
    }
    if (!found)
        throw std::out_of_range("removal_importance: parameter index " +
                                std::to_string(flat_index) + " out of range");
    const double loss_ablated =
        nn::softmax_cross_entropy(ablated.forward(batch, /*training=*/true), labels).loss;
    const double d = loss_full - loss_ablated;
    return d * d;
}

double neuron_importance(const Matrix& weights, const Matrix& weight_grads,
                         std::span<const double> bias, std::span<const double> bias_grads,
                         std::size_t j) {
    if (j >= weights.rows)
        throw std::out_of_range("neuron_importance: neuron " + std::to_string(j) +
                                " out of range for " + std::to_string(weights.rows) +
                                " rows");
    if (!weights.same_shape(weight_grads) || bias.size() != weights.rows ||
        bias_grads.size() != weights.rows)
        throw std::invalid_argument("neuron_importance: shape mismatch");
    double sum = 0.0;
    for (std::size_t c = 0; c < weights.cols; ++c)
        sum += taylor_importance(weight_grads(j, c), weights(j, c));
    sum += taylor_importance(bias_grads[j], bias[j]);
    return sum;
}

std::vector<double> layer_neuron_importances(const Matrix& weights, const Matrix& weight_grads,
                                             std::span<const double> bias,
                                             std::span<const double> bias_grads) {
    std::vector<double> out(weights.rows);
    for (std::size_t j = 0; j < weights.rows; ++j)
        out[j] = neuron_importance(weights, weight_grads, bias, bias_grads, j);
    return out;
}

std::vector<double> layer_input_importances(const Matrix& weights, const Matrix& weight_grads) {
    if (!weights.same_shape(weight_grads))
        throw std::invalid_argument("layer_input_importances: shape mismatch");
    std::vector<double> out(weights.cols, 0.0);
    for (std::size_t r = 0; r < weights.rows; ++r)
        for (std::size_t c = 0; c < weights.cols; ++c)
            out[c] += taylor_importance(weight_grads(r, c), weights(r, c));
    return out;
}

ImportanceTracker::ImportanceTracker(std::size_t width, std::size_t iterations_per_epoch,
                                     std::size_t max_iterations)
    : u_(width, 0.0), iters_per_epoch_(iterations_per_epoch), max_iterations_(max_iterations) {
    if (width == 0) throw std::invalid_argument("importance tracker: width must be > 0");
    if (iterations_per_epoch == 0 || max_iterations == 0)
        throw std::invalid_argument("importance tracker: counters must be > 0");
    if (max_iterations % iterations_per_epoch != 0)
        throw std::invalid_argument("importance tracker: max iterations " +
                                    std::to_string(max_iterations) +
                                    " not divisible by iterations per epoch " +
                                    std::to_string(iterations_per_epoch));
}

void ImportanceTracker::update(std::span<const double> fresh) {
    if (fresh.size() != u_.size())
        throw std::invalid_argument("importance tracker: update width " +
                                    std::to_string(fresh.size()) + " != " +
                                    std::to_string(u_.size()));
    const double count = static_cast<double>(updates_ + 1);
    for (std::size_t j = 0; j < u_.size(); ++j) {
        if (fresh[j] < 0.0)
            throw std::invalid_argument("importance tracker: negative importance");
        u_[j] = (fresh[j] + u_[j] * (count - 1.0)) / count;
    }
    updates_ += 1;
    iter_in_epoch_ += 1;
    if (iter_in_epoch_ == iters_per_epoch_) {
        epoch_history_.push_back(u_);
        iter_in_epoch_ = 0;
        epoch_ += 1;
    }
}

std::string ImportanceTracker::history_csv() const {
    std::string out = "epoch,neuron,importance\n";
    char buf[96];
    for (std::size_t e = 0; e < epoch_history_.size(); ++e) {
        for (std::size_t j = 0; j < epoch_history_[e].size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g\n", e + 1, j,
                          epoch_history_[e][j]);
            out += buf;
        }
    }
    return out;
}

FeatureBudget allocate_feature_budgets(std::span<const double> importance, double eps_unit) {
    FeatureBudget b;
    b.eps_unit = eps_unit;
    b.eps_j.reserve(importance.size());
    double total = 0.0;
    for (double u : importance) {
        if (u < 0.0)
            throw std::invalid_argument("allocate_feature_budgets: importance must be >= 0");
        b.eps_j.push_back(eps_unit * u);
        total += eps_unit * u;
    }
    b.eps_total = total;
    return b;
}

} // namespace r3split::importance
