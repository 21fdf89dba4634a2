#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "r3split/numerics.hpp"

namespace r3split::nn {

// Mutable view over one parameter tensor and its gradient, used by the
// optimizer and the importance estimators.
struct ParamSlice {
    double* value;
    double* grad;
    std::size_t size;
};

class LinearLayer {
public:
    LinearLayer(std::size_t out_dim, std::size_t in_dim);
    // Uniform init in +-sqrt(6/(fan_in+fan_out)), bias zero.
    static LinearLayer glorot(std::size_t out_dim, std::size_t in_dim, RngState& rng);

    Matrix forward(const Matrix& x, bool training);
    Matrix backward(const Matrix& grad_out);

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }

    Matrix weights; // out x in
    std::vector<double> bias;
    Matrix weight_grad;
    std::vector<double> bias_grad;

private:
    Matrix cached_input_;
    bool have_cache_ = false;
};

class ReluLayer {
public:
    Matrix forward(const Matrix& x, bool training);
    Matrix backward(const Matrix& grad_out);

private:
    Matrix cached_input_;
    bool have_cache_ = false;
};

class SigmoidLayer {
public:
    Matrix forward(const Matrix& x, bool training);
    Matrix backward(const Matrix& grad_out);

private:
    Matrix cached_output_;
    bool have_cache_ = false;
};

class BatchNormLayer {
public:
    explicit BatchNormLayer(std::size_t width, double epsilon = 1e-5, double momentum = 0.1);

    Matrix forward(const Matrix& x, bool training);
    Matrix backward(const Matrix& grad_out);

    std::size_t width() const { return gamma.size(); }

    std::vector<double> gamma, beta;
    std::vector<double> gamma_grad, beta_grad;
    std::vector<double> running_mean, running_var;
    double epsilon;
    double momentum;

private:
    Matrix cached_input_;
    std::vector<double> batch_mean_, batch_inv_std_;
    bool cache_training_ = false;
    bool have_cache_ = false;
};

using Layer = std::variant<LinearLayer, ReluLayer, BatchNormLayer, SigmoidLayer>;

enum class LayerKind : std::uint8_t { linear = 0, relu = 1, batch_norm = 2, sigmoid = 3 };

LayerKind layer_kind(const Layer& layer);

// Ordered layer stack with exact reverse-mode gradients. Dimensions are
// validated at construction time, so adjacent layers always chain.
class SequentialModel {
public:
    SequentialModel() = default;
    explicit SequentialModel(std::size_t input_dim);

    SequentialModel& add_linear(std::size_t out_dim, RngState& rng);
    SequentialModel& add_relu();
    SequentialModel& add_batch_norm();
    SequentialModel& add_sigmoid();

    Matrix forward(const Matrix& batch, bool training);
    // Returns the gradient w.r.t. the model input (the partial loss at the
    // cut when this model is a guest sub-network). Gradients accumulate into
    // the layers; call zero_grads() between steps.
    Matrix backward(const Matrix& output_grad);

    void zero_grads();

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return current_dim_; }
    std::size_t param_count() const;
    std::vector<ParamSlice> param_slices();
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::size_t input_dim_ = 0;
    std::size_t current_dim_ = 0;
    std::vector<Layer> layers_;
    bool forward_ran_ = false;
};

struct LossResult {
    double loss;
    Matrix grad; // (softmax - onehot) / batch_size
};

// Mean softmax cross-entropy over the batch. Throws on out-of-range labels.
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

Matrix softmax(const Matrix& logits);

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
    OptimizerState() = default;
    OptimizerState(OptimizerKind k, double lr) : kind(k), learning_rate(lr) {}

    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<double> m, v; // Adam moments, sized on first step
};

// Applies one update using the gradients accumulated in the model's layers.
void optimizer_step(OptimizerState& opt, SequentialModel& model);

// Versioned binary checkpoint: magic, version, input dim, layer count, then
// per-layer kind tag + shape + little-endian 64-bit floats.
void save_model(const SequentialModel& model, const std::string& path);
SequentialModel load_model(const std::string& path);

} // namespace r3split::nn
