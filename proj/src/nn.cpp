#include "r3split/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace r3split::nn {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

} // namespace

// ---------------------------------------------------------------------------
// LinearLayer

LinearLayer::LinearLayer(std::size_t out_dim, std::size_t in_dim)
    : weights(out_dim, in_dim),
      bias(out_dim, 0.0),
      weight_grad(out_dim, in_dim),
      bias_grad(out_dim, 0.0) {}

LinearLayer LinearLayer::glorot(std::size_t out_dim, std::size_t in_dim, RngState& rng) {
    LinearLayer layer(out_dim, in_dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (auto& w : layer.weights.data) w = (2.0 * rng.uniform() - 1.0) * bound;
    return layer;
}

Matrix LinearLayer::forward(const Matrix& x, bool) {
    require(x.cols == weights.cols,
            "linear forward: input width " + std::to_string(x.cols) + " != " +
                std::to_string(weights.cols));
    cached_input_ = x;
    have_cache_ = true;
    Matrix y = matmul(x, transpose(weights));
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += bias[j];
    return y;
}

Matrix LinearLayer::backward(const Matrix& grad_out) {
    if (!have_cache_) throw std::logic_error("linear backward: no cached forward input");
    require(grad_out.rows == cached_input_.rows && grad_out.cols == weights.rows,
            "linear backward: gradient shape " + shape_str(grad_out) + " unexpected");
    Matrix wg = matmul(transpose(grad_out), cached_input_); // out x in
    for (std::size_t i = 0; i < wg.data.size(); ++i) weight_grad.data[i] += wg.data[i];
    for (std::size_t i = 0; i < grad_out.rows; ++i)
        for (std::size_t j = 0; j < grad_out.cols; ++j) bias_grad[j] += grad_out(i, j);
    return matmul(grad_out, weights);
}

// ---------------------------------------------------------------------------
// ReluLayer

Matrix ReluLayer::forward(const Matrix& x, bool) {
    cached_input_ = x;
    have_cache_ = true;
    Matrix y = x;
    for (auto& v : y.data) v = std::max(0.0, v);
    return y;
}

Matrix ReluLayer::backward(const Matrix& grad_out) {
    if (!have_cache_) throw std::logic_error("relu backward: no cached forward input");
    require(grad_out.same_shape(cached_input_), "relu backward: gradient shape mismatch");
    Matrix gin = grad_out;
    for (std::size_t i = 0; i < gin.data.size(); ++i)
        if (cached_input_.data[i] <= 0.0) gin.data[i] = 0.0;
    return gin;
}

// ---------------------------------------------------------------------------
// SigmoidLayer

Matrix SigmoidLayer::forward(const Matrix& x, bool) {
    Matrix y = x;
    for (auto& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
    cached_output_ = y;
    have_cache_ = true;
    return y;
}

Matrix SigmoidLayer::backward(const Matrix& grad_out) {
    if (!have_cache_) throw std::logic_error("sigmoid backward: no cached forward output");
    require(grad_out.same_shape(cached_output_), "sigmoid backward: gradient shape mismatch");
    Matrix gin = grad_out;
    for (std::size_t i = 0; i < gin.data.size(); ++i) {
        const double y = cached_output_.data[i];
        gin.data[i] *= y * (1.0 - y);
    }
    return gin;
}

// ---------------------------------------------------------------------------
// BatchNormLayer

BatchNormLayer::BatchNormLayer(std::size_t width, double eps, double mom)
    : gamma(width, 1.0),
      beta(width, 0.0),
      gamma_grad(width, 0.0),
      beta_grad(width, 0.0),
      running_mean(width, 0.0),
      running_var(width, 1.0),
      epsilon(eps),
      momentum(mom) {}

Matrix BatchNormLayer::forward(const Matrix& x, bool training) {
    require(x.cols == width(), "batch_norm forward: input width " + std::to_string(x.cols) +
                                   " != " + std::to_string(width()));
    const std::size_t m = x.rows;
    const std::size_t n = x.cols;
    cached_input_ = x;
    cache_training_ = training;
    have_cache_ = true;

    batch_mean_.assign(n, 0.0);
    batch_inv_std_.assign(n, 0.0);
    Matrix y(m, n);

    if (training) {
        require(m > 0, "batch_norm forward: empty batch in training mode");
        std::vector<double> var(n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) batch_mean_[j] += x(i, j);
        for (auto& v : batch_mean_) v /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double d = x(i, j) - batch_mean_[j];
                var[j] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(m);
        for (std::size_t j = 0; j < n; ++j) {
            batch_inv_std_[j] = 1.0 / std::sqrt(var[j] + epsilon);
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * batch_mean_[j];
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            batch_mean_[j] = running_mean[j];
            batch_inv_std_[j] = 1.0 / std::sqrt(running_var[j] + epsilon);
        }
    }

    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            y(i, j) = gamma[j] * (x(i, j) - batch_mean_[j]) * batch_inv_std_[j] + beta[j];
    return y;
}

Matrix BatchNormLayer::backward(const Matrix& grad_out) {
    if (!have_cache_) throw std::logic_error("batch_norm backward: no cached forward input");
    require(grad_out.same_shape(cached_input_), "batch_norm backward: gradient shape mismatch");
    const std::size_t m = grad_out.rows;
    const std::size_t n = grad_out.cols;
    Matrix gin(m, n);

    if (!cache_training_) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double xhat =
                    (cached_input_(i, j) - batch_mean_[j]) * batch_inv_std_[j];
                gamma_grad[j] += grad_out(i, j) * xhat;
                beta_grad[j] += grad_out(i, j);
                gin(i, j) = grad_out(i, j) * gamma[j] * batch_inv_std_[j];
            }
        return gin;
    }

    // Training mode: the batch statistics depend on the input, so the chain
    // rule carries terms through the mean and variance.
    const double md = static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (cached_input_(i, j) - batch_mean_[j]) * batch_inv_std_[j];
            sum_g += grad_out(i, j);
            sum_gx += grad_out(i, j) * xhat;
        }
        gamma_grad[j] += sum_gx;
        beta_grad[j] += sum_g;
        for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (cached_input_(i, j) - batch_mean_[j]) * batch_inv_std_[j];
            gin(i, j) = gamma[j] * batch_inv_std_[j] / md *
                        (md * grad_out(i, j) - sum_g - xhat * sum_gx);
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// SequentialModel

LayerKind layer_kind(const Layer& layer) {
    if (std::holds_alternative<LinearLayer>(layer)) return LayerKind::linear;
    if (std::holds_alternative<ReluLayer>(layer)) return LayerKind::relu;
    if (std::holds_alternative<SigmoidLayer>(layer)) return LayerKind::sigmoid;
    return LayerKind::batch_norm;
}

SequentialModel::SequentialModel(std::size_t input_dim)
    : input_dim_(input_dim), current_dim_(input_dim) {}

SequentialModel& SequentialModel::add_linear(std::size_t out_dim, RngState& rng) {
    layers_.emplace_back(LinearLayer::glorot(out_dim, current_dim_, rng));
    current_dim_ = out_dim;
    return *this;
}

SequentialModel& SequentialModel::add_relu() {
    layers_.emplace_back(ReluLayer{});
    return *this;
}

SequentialModel& SequentialModel::add_batch_norm() {
    layers_.emplace_back(BatchNormLayer(current_dim_));
    return *this;
}

SequentialModel& SequentialModel::add_sigmoid() {
    layers_.emplace_back(SigmoidLayer{});
    return *this;
}

Matrix SequentialModel::forward(const Matrix& batch, bool training) {
    require(batch.cols == input_dim_, "model forward: batch width " +
                                          std::to_string(batch.cols) + " != input dim " +
                                          std::to_string(input_dim_));
    Matrix x = batch;
    for (auto& layer : layers_)
        x = std::visit([&](auto& l) { return l.forward(x, training); }, layer);
    forward_ran_ = true;
    return x;
}

Matrix SequentialModel::backward(const Matrix& output_grad) {
    if (!forward_ran_) throw std::logic_error("model backward: forward has not been run");
    Matrix g = output_grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        g = std::visit([&](auto& l) { return l.backward(g); }, *it);
    return g;
}

void SequentialModel::zero_grads() {
    for (auto& layer : layers_) {
        if (auto* lin = std::get_if<LinearLayer>(&layer)) {
            std::fill(lin->weight_grad.data.begin(), lin->weight_grad.data.end(), 0.0);
            std::fill(lin->bias_grad.begin(), lin->bias_grad.end(), 0.0);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            std::fill(bn->gamma_grad.begin(), bn->gamma_grad.end(), 0.0);
            std::fill(bn->beta_grad.begin(), bn->beta_grad.end(), 0.0);
        }
    }
}

std::size_t SequentialModel::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* lin = std::get_if<LinearLayer>(&layer))
            n += lin->weights.data.size() + lin->bias.size();
        else if (const auto* bn = std::get_if<BatchNormLayer>(&layer))
            n += bn->gamma.size() + bn->beta.size();
    }
    return n;
}

std::vector<ParamSlice> SequentialModel::param_slices() {
    std::vector<ParamSlice> slices;
    for (auto& layer : layers_) {
        if (auto* lin = std::get_if<LinearLayer>(&layer)) {
            slices.push_back({lin->weights.data.data(), lin->weight_grad.data.data(),
                              lin->weights.data.size()});
            slices.push_back({lin->bias.data(), lin->bias_grad.data(), lin->bias.size()});
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            slices.push_back({bn->gamma.data(), bn->gamma_grad.data(), bn->gamma.size()});
            slices.push_back({bn->beta.data(), bn->beta_grad.data(), bn->beta.size()});
        }
    }
    return slices;
}

// ---------------------------------------------------------------------------
// Loss

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            p(i, j) = std::exp(logits(i, j) - mx);
            sum += p(i, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) p(i, j) /= sum;
    }
    return p;
}

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    require(labels.size() == logits.rows, "softmax_cross_entropy: " +
                                              std::to_string(labels.size()) + " labels for " +
                                              std::to_string(logits.rows) + " rows");
    for (int l : labels)
        require(l >= 0 && static_cast<std::size_t>(l) < logits.cols,
                "softmax_cross_entropy: label " + std::to_string(l) + " out of range [0," +
                    std::to_string(logits.cols) + ")");
    const double m = static_cast<double>(logits.rows);
    Matrix p = softmax(logits);
    double loss = 0.0;
    Matrix grad = p;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        loss -= std::log(std::max(p(i, y), 1e-300));
        grad(i, y) -= 1.0;
    }
    for (auto& g : grad.data) g /= m;
    return {loss / m, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Optimizer

void optimizer_step(OptimizerState& opt, SequentialModel& model) {
    auto slices = model.param_slices();
    std::size_t total = 0;
    for (const auto& s : slices) total += s.size;

    if (opt.kind == OptimizerKind::adam) {
        if (opt.m.empty()) {
            opt.m.assign(total, 0.0);
            opt.v.assign(total, 0.0);
        }
        require(opt.m.size() == total, "optimizer_step: moment size " +
                                           std::to_string(opt.m.size()) +
                                           " != parameter count " + std::to_string(total));
        opt.step += 1;
        const double b1t = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
        const double b2t = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
        std::size_t off = 0;
        for (const auto& s : slices) {
            for (std::size_t i = 0; i < s.size; ++i) {
                const double g = s.grad[i];
                double& m = opt.m[off + i];
                double& v = opt.v[off + i];
                m = opt.beta1 * m + (1.0 - opt.beta1) * g;
                v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
                const double mhat = m / b1t;
                const double vhat = v / b2t;
                s.value[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
            }
            off += s.size;
        }
    } else {
        opt.step += 1;
        for (const auto& s : slices)
            for (std::size_t i = 0; i < s.size; ++i)
                s.value[i] -= opt.learning_rate * s.grad[i];
    }
}

// ---------------------------------------------------------------------------
// Checkpoint io

namespace {

constexpr std::uint32_t kMagic = 0x4e4e3352; // "R3NN"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        auto* p = reinterpret_cast<unsigned char*>(&value);
        std::reverse(p, p + sizeof(T));
    }
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

template <typename T>
T read_le(std::istream& in) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    if constexpr (std::endian::native == std::endian::big) {
        auto* p = reinterpret_cast<unsigned char*>(&value);
        std::reverse(p, p + sizeof(T));
    }
    return value;
}

void write_doubles(std::ostream& out, std::span<const double> v) {
    for (double x : v) write_le(out, x);
}

void read_doubles(std::istream& in, std::span<double> v) {
    for (double& x : v) x = read_le<double>(in);
}

} // namespace

void save_model(const SequentialModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    write_le(out, kMagic);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(model.input_dim()));
    write_le(out, static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& layer : model.layers()) {
        write_le(out, static_cast<std::uint8_t>(layer_kind(layer)));
        if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            write_le(out, static_cast<std::uint32_t>(lin->out_dim()));
            write_le(out, static_cast<std::uint32_t>(lin->in_dim()));
            write_doubles(out, lin->weights.data);
            write_doubles(out, lin->bias);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            write_le(out, static_cast<std::uint32_t>(bn->width()));
            write_doubles(out, bn->gamma);
            write_doubles(out, bn->beta);
            write_doubles(out, bn->running_mean);
            write_doubles(out, bn->running_var);
        }
    }
}

SequentialModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    if (read_le<std::uint32_t>(in) != kMagic)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (read_le<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    const auto input_dim = static_cast<std::size_t>(read_le<std::uint64_t>(in));
    const auto layer_count = read_le<std::uint32_t>(in);

    SequentialModel model(input_dim);
    RngState dummy(0);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const auto kind = static_cast<LayerKind>(read_le<std::uint8_t>(in));
        switch (kind) {
        case LayerKind::linear: {
            const auto out_dim = read_le<std::uint32_t>(in);
            const auto in_dim = read_le<std::uint32_t>(in);
            if (in_dim != model.output_dim())
                throw std::runtime_error("checkpoint: layer dimensions do not chain");
            model.add_linear(out_dim, dummy);
            auto& lin = std::get<LinearLayer>(model.layers().back());
            read_doubles(in, lin.weights.data);
            read_doubles(in, lin.bias);
            break;
        }
        case LayerKind::relu:
            model.add_relu();
            break;
        case LayerKind::sigmoid:
            model.add_sigmoid();
            break;
        case LayerKind::batch_norm: {
            const auto width = read_le<std::uint32_t>(in);
            if (width != model.output_dim())
                throw std::runtime_error("checkpoint: batch_norm width does not chain");
            model.add_batch_norm();
            auto& bn = std::get<BatchNormLayer>(model.layers().back());
            read_doubles(in, bn.gamma);
            read_doubles(in, bn.beta);
            read_doubles(in, bn.running_mean);
            read_doubles(in, bn.running_var);
            break;
        }
        default:
            throw std::runtime_error("checkpoint: unknown layer kind tag");
        }
    }
    return model;
}

} // namespace r3split::nn
