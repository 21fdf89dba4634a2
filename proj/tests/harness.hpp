// Shared experiment setups used by both the unit tests and the acceptance
// suite.
#pragma once

#include <cstdint>
#include <vector>

#include "r3split/importance.hpp"
#include "r3split/nn.hpp"
#include "r3split/numerics.hpp"

namespace harness {

using r3split::Matrix;
using r3split::RngState;

struct ToyTask {
    Matrix x;
    std::vector<int> y;
    std::size_t classes;
};

// Synthetic classification task. Only the first `informative` feature
// dimensions carry class signal; label noise keeps the gradients alive after
// the model converges.
inline ToyTask make_toy_task(std::size_t rows, std::size_t dim, std::size_t classes,
                             std::uint64_t seed, std::size_t informative = 0,
                             double label_noise = 0.0) {
    if (informative == 0) informative = dim;
    RngState rng(seed);
    Matrix proto(classes, dim, 0.0);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < informative; ++j) proto(c, j) = 1.5 * rng.normal();
    ToyTask task;
    task.x = Matrix(rows, dim);
    task.y.resize(rows);
    task.classes = classes;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto c = static_cast<std::size_t>(rng.u64() % classes);
        task.y[r] = static_cast<int>(c);
        if (label_noise > 0.0 && rng.uniform() < label_noise)
            task.y[r] = static_cast<int>(rng.u64() % classes);
        for (std::size_t j = 0; j < dim; ++j)
            task.x(r, j) = proto(c, j) + 0.6 * rng.normal();
    }
    return task;
}

struct ImportanceRun {
    std::vector<double> dynamic_u; // tracker state after the full run
    std::vector<double> static_u;  // fresh estimate on the converged model
};

// Trains a small MLP while feeding the cumulative tracker from the gradients
// of a designated linear layer, then recomputes the importance statically on
// the converged parameters over the same data.
inline ImportanceRun run_importance_experiment(std::size_t epochs, std::uint64_t seed) {
    using namespace r3split;
    const std::size_t rows = 240, dim = 10, classes = 4, batch = 16, width = 16;
    // Label noise keeps gradients alive at convergence; plain SGD keeps the
    // neuron roles stable enough for the time-average to mean something.
    ToyTask task = make_toy_task(rows, dim, classes, seed, /*informative=*/5,
                                 /*label_noise=*/0.2);

    RngState init(seed ^ 0xabcdef);
    nn::SequentialModel model(dim);
    model.add_linear(24, init).add_relu().add_linear(width, init).add_relu().add_linear(
        classes, init);
    const std::size_t tracked_layer = 2; // second linear, `width` neurons
    nn::OptimizerState opt{nn::OptimizerKind::sgd, 0.1};

    const std::size_t ipe = rows / batch;
    importance::ImportanceTracker tracker(width, ipe, epochs * ipe);
    RngState shuffle(seed ^ 0x51);

    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;

    auto train_batch = [&](std::size_t begin, bool update_tracker) {
        Matrix bx(batch, dim);
        std::vector<int> by(batch);
        for (std::size_t m = 0; m < batch; ++m) {
            const std::size_t r = order[begin + m];
            by[m] = task.y[r];
            for (std::size_t j = 0; j < dim; ++j) bx(m, j) = task.x(r, j);
        }
        const auto logits = model.forward(bx, true);
        const auto loss = nn::softmax_cross_entropy(logits, by);
        model.zero_grads();
        model.backward(loss.grad);
        if (update_tracker) {
            const auto& lin = std::get<nn::LinearLayer>(model.layers()[tracked_layer]);
            tracker.update(importance::layer_neuron_importances(lin.weights, lin.weight_grad,
                                                                lin.bias, lin.bias_grad));
        }
        return loss.loss;
    };

    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[shuffle.u64() % i]);
        for (std::size_t b = 0; b < ipe; ++b) {
            train_batch(b * batch, true);
            nn::optimizer_step(opt, model);
        }
    }

    ImportanceRun out;
    out.dynamic_u = tracker.values();

    // Static estimate on the converged model: accumulate fresh estimates
    // over several reshuffled passes without updating parameters.
    std::vector<double> stat(width, 0.0);
    for (int pass = 0; pass < 10; ++pass) {
        for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[shuffle.u64() % i]);
        for (std::size_t b = 0; b < ipe; ++b) {
            train_batch(b * batch, false);
            const auto& lin = std::get<nn::LinearLayer>(model.layers()[tracked_layer]);
            const auto fresh = importance::layer_neuron_importances(
                lin.weights, lin.weight_grad, lin.bias, lin.bias_grad);
            for (std::size_t j = 0; j < width; ++j) stat[j] += fresh[j];
        }
    }
    out.static_u = stat;
    return out;
}

// Taylor estimates vs the removal oracle on a <=100 parameter model, both
// evaluated on one fixed batch.
struct TaylorVsRemoval {
    std::vector<double> taylor;
    std::vector<double> removal;
};

inline TaylorVsRemoval run_taylor_vs_removal(std::uint64_t seed) {
    using namespace r3split;
    const std::size_t dim = 4, hidden = 8, classes = 3, rows = 32;
    ToyTask task = make_toy_task(rows, dim, classes, seed);

    RngState init(seed ^ 0x77);
    nn::SequentialModel model(dim);
    model.add_linear(hidden, init).add_relu().add_linear(classes, init); // 67 params
    nn::OptimizerState opt{nn::OptimizerKind::adam, 0.02};

    // A little training so the parameters carry task structure.
    for (int step = 0; step < 120; ++step) {
        const auto logits = model.forward(task.x, true);
        const auto loss = nn::softmax_cross_entropy(logits, task.y);
        model.zero_grads();
        model.backward(loss.grad);
        nn::optimizer_step(opt, model);
    }

    const auto logits = model.forward(task.x, true);
    const auto loss = nn::softmax_cross_entropy(logits, task.y);
    model.zero_grads();
    model.backward(loss.grad);

    TaylorVsRemoval out;
    for (const auto& s : model.param_slices())
        for (std::size_t i = 0; i < s.size; ++i)
            out.taylor.push_back(importance::taylor_importance(s.grad[i], s.value[i]));
    const std::size_t total = out.taylor.size();
    for (std::size_t j = 0; j < total; ++j)
        out.removal.push_back(importance::removal_importance(model, task.x, task.y, j));
    return out;
}

} // namespace harness
