#include "r3split/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "r3split/data.hpp"

namespace r3split::splitnn {

namespace {

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> ids) {
    Matrix out(ids.size(), src.cols);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < src.cols; ++j) out(i, j) = src(ids[i], j);
    return out;
}

std::vector<double> relu_row(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x = std::max(0.0, x);
    return out;
}

nn::LinearLayer* last_linear(nn::SequentialModel& model) {
    for (auto it = model.layers().rbegin(); it != model.layers().rend(); ++it)
        if (auto* lin = std::get_if<nn::LinearLayer>(&*it)) return lin;
    return nullptr;
}

nn::LinearLayer* first_linear(nn::SequentialModel& model) {
    for (auto& layer : model.layers())
        if (auto* lin = std::get_if<nn::LinearLayer>(&layer)) return lin;
    return nullptr;
}

// Elementwise clamp + Laplace on the whole vector; the primitive baseline.
std::vector<double> primitive_laplace_vector(std::span<const double> v, double lo, double hi,
                                             double scale, RngState& rng) {
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x = std::clamp(x, lo, hi) + rng.laplace(0.0, scale);
    return out;
}

// Whole-model l2 gradient clip followed by per-coordinate Gaussian noise.
void dpsgd_perturb_grads(nn::SequentialModel& model, double clip, double sigma,
                         RngState& rng) {
    auto slices = model.param_slices();
    double norm_sq = 0.0;
    for (const auto& s : slices)
        for (std::size_t i = 0; i < s.size; ++i) norm_sq += s.grad[i] * s.grad[i];
    const double norm = std::sqrt(norm_sq);
    const double factor = norm > clip ? clip / norm : 1.0;
    for (const auto& s : slices)
        for (std::size_t i = 0; i < s.size; ++i)
            s.grad[i] = s.grad[i] * factor + sigma * rng.normal();
}

double dpsgd_sigma(double clip, double step_eps, double delta) {
    return clip * std::sqrt(2.0 * std::log(1.25 / delta)) / step_eps;
}

TunnelMessage expect_message(Channel& channel, Direction dir, std::uint64_t iteration,
                             std::size_t width) {
    TunnelMessage msg = channel.receive();
    if (msg.direction != dir || msg.iteration != iteration)
        throw TransportError("protocol violation: unexpected message (direction=" +
                             std::to_string(int(msg.direction)) + ", iteration=" +
                             std::to_string(msg.iteration) + ", expected iteration " +
                             std::to_string(iteration) + ")");
    if (msg.payload.size() != width)
        throw TransportError("protocol violation: payload width " +
                             std::to_string(msg.payload.size()) + " != cut width " +
                             std::to_string(width));
    return msg;
}

} // namespace

TaskKind task_from_string(const std::string& s) {
    if (s == "classification") return TaskKind::classification;
    if (s == "recommendation") return TaskKind::recommendation;
    throw std::invalid_argument("unknown task '" + s + "'");
}

std::string to_string(TaskKind t) {
    return t == TaskKind::classification ? "classification" : "recommendation";
}

Allocation allocation_from_string(const std::string& s) {
    if (s == "uniform") return Allocation::uniform;
    if (s == "dynamic") return Allocation::dynamic_importance;
    throw std::invalid_argument("unknown allocation '" + s + "' (expected uniform|dynamic)");
}

std::string to_string(Allocation a) {
    return a == Allocation::uniform ? "uniform" : "dynamic";
}

Protect protect_from_string(const std::string& s) {
    if (s == "none") return Protect::none;
    if (s == "guest") return Protect::guest;
    if (s == "host") return Protect::host;
    if (s == "both") return Protect::both;
    throw std::invalid_argument("unknown protect '" + s + "' (expected none|guest|host|both)");
}

std::string to_string(Protect p) {
    switch (p) {
    case Protect::none: return "none";
    case Protect::guest: return "guest";
    case Protect::host: return "host";
    case Protect::both: return "both";
    }
    return "?";
}

Mechanism mechanism_from_string(const std::string& s) {
    if (s == "r3elu") return Mechanism::r3elu;
    if (s == "laplace") return Mechanism::laplace_primitive;
    if (s == "dpsgd") return Mechanism::dpsgd_minimal;
    throw std::invalid_argument("unknown mechanism '" + s + "' (expected r3elu|laplace|dpsgd)");
}

std::string to_string(Mechanism m) {
    switch (m) {
    case Mechanism::r3elu: return "r3elu";
    case Mechanism::laplace_primitive: return "laplace";
    case Mechanism::dpsgd_minimal: return "dpsgd";
    }
    return "?";
}

ModelArch arch_from_string(const std::string& s) {
    if (s == "recsys") return ModelArch::recsys;
    if (s == "mnist_mlp") return ModelArch::mnist_mlp;
    throw std::invalid_argument("unknown arch '" + s + "'");
}

std::string to_string(ModelArch a) {
    return a == ModelArch::recsys ? "recsys" : "mnist_mlp";
}

privacy::PrivacyParams DefenseConfig::params(std::size_t cut_width,
                                             double step_epsilon) const {
    const auto [eps_p, eps_l] = privacy::budget_split(step_epsilon, p_ratio);
    privacy::PrivacyParams p;
    p.eps_p = eps_p;
    p.eps_l = eps_l;
    p.k = k;
    p.clip_c = clip_c;
    p.n = cut_width;
    p.validate();
    return p;
}

void ProtocolConfig::validate() const {
    if (train_rows < batch_size || batch_size == 0)
        throw std::invalid_argument("protocol: need train_rows >= batch_size >= 1");
    if (epochs == 0) throw std::invalid_argument("protocol: epochs must be >= 1");
    if (defense.protect != Protect::none) {
        if (!(defense.epsilon > 0.0))
            throw std::invalid_argument("protocol: defense epsilon must be > 0");
        if (defense.k == 0) throw std::invalid_argument("protocol: defense k must be >= 1");
    }
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t rows) {
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;
    RngState rng = RngState(seed).fork(kShuffleStream).fork(epoch);
    for (std::size_t i = rows; i > 1; --i) {
        const std::size_t j = rng.u64() % i;
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::size_t max_feasible_iterations(const ProtocolConfig& cfg) {
    const std::size_t planned = cfg.planned_iterations();
    const auto& d = cfg.defense;
    if (d.protect == Protect::none || d.schedule == privacy::Schedule::halving ||
        !std::isfinite(d.budget_cap))
        return planned;
    const long double gamma = cfg.gamma();
    long double spent = 0.0L;
    for (std::size_t t = 1; t <= planned; ++t) {
        const long double next = spent + gamma * static_cast<long double>(d.epsilon);
        if (next > static_cast<long double>(d.budget_cap)) return t - 1;
        spent = next;
    }
    return planned;
}

SplitModel build_split_model(ModelArch arch, std::size_t guest_in, std::size_t host_in,
                             std::size_t classes, MergeStrategy merge, RngState& guest_rng,
                             RngState& host_rng) {
    SplitModel sm;
    sm.merge = merge;
    if (arch == ModelArch::recsys) {
        sm.cut_width = 128;
        nn::SequentialModel guest(guest_in);
        guest.add_linear(128, guest_rng);
        nn::SequentialModel embed(host_in);
        embed.add_linear(128, host_rng).add_relu();
        const std::size_t tin = merged_width(128, 128, merge);
        nn::SequentialModel tail(tin);
        tail.add_linear(128, host_rng)
            .add_relu()
            .add_linear(64, host_rng)
            .add_relu()
            .add_linear(classes, host_rng);
        sm.guest = std::move(guest);
        sm.host_embed = std::move(embed);
        sm.host_tail = std::move(tail);
    } else {
        sm.cut_width = 64;
        nn::SequentialModel guest(guest_in);
        guest.add_linear(128, guest_rng).add_batch_norm().add_relu().add_linear(64, guest_rng);
        nn::SequentialModel embed(host_in);
        embed.add_linear(128, host_rng)
            .add_batch_norm()
            .add_relu()
            .add_linear(64, host_rng)
            .add_batch_norm()
            .add_relu();
        const std::size_t tin = merged_width(64, 64, merge);
        nn::SequentialModel tail(tin);
        tail.add_linear(64, host_rng).add_batch_norm().add_relu().add_linear(classes, host_rng);
        sm.guest = std::move(guest);
        sm.host_embed = std::move(embed);
        sm.host_tail = std::move(tail);
    }
    return sm;
}

// ---------------------------------------------------------------------------
// Guest loop

GuestRunResult run_guest_party(Channel& channel, nn::SequentialModel& model,
                               const Matrix& train_features, const Matrix& test_features,
                               const ProtocolConfig& cfg, const GuestHooks* hooks) {
    cfg.validate();
    const std::size_t cut = model.output_dim();
    const std::size_t ipe = cfg.iters_per_epoch();
    const std::size_t feasible = max_feasible_iterations(cfg);
    const auto& defense = cfg.defense;

    RngState tunnel_rng = RngState(cfg.seed).fork(kGuestTunnelStream);
    nn::OptimizerState opt{cfg.optimizer, cfg.learning_rate};
    importance::ImportanceTracker tracker(cut, ipe, cfg.planned_iterations());
    std::vector<double> snapshot(cut, 0.0);
    std::vector<double> epoch_p; // Eq.-10 probabilities, frozen per epoch

    const bool fixed = defense.schedule == privacy::Schedule::fixed_step;
    privacy::BudgetAccountant acct(
        "guest", fixed ? defense.budget_cap : defense.epsilon, cfg.gamma(),
        cfg.planned_iterations(), defense.schedule, defense.delta);
    privacy::TunnelOptions opts{defense.draw, defense.backward_noise_all};

    std::vector<std::size_t> order;
    GuestRunResult result;

    for (std::size_t iter = 1; iter <= feasible; ++iter) {
        const std::size_t epoch = (iter - 1) / ipe + 1;
        const std::size_t slot = (iter - 1) % ipe;
        if (slot == 0) {
            order = epoch_order(cfg.seed, epoch, cfg.train_rows);
            snapshot = tracker.values();
            epoch_p.clear();
        }
        const std::span<const std::size_t> batch_ids(order.data() + slot * cfg.batch_size,
                                                     cfg.batch_size);
        const Matrix batch = gather_rows(train_features, batch_ids);
        const Matrix v = model.forward(batch, /*training=*/true);

        const double step_eps = fixed
                                    ? defense.epsilon
                                    : privacy::per_iteration_budget(defense.epsilon, iter);

        const bool fwd_defend = defense.forward_on();
        if (fwd_defend && defense.mechanism == Mechanism::r3elu) {
            const auto params = defense.params(cut, step_eps);
            std::vector<double> scales;
            if (defense.allocation == Allocation::dynamic_importance) {
                scales = privacy::dynamic_laplace_scales(snapshot, params);
                if (epoch_p.empty())
                    epoch_p = privacy::response_probability_dynamic(snapshot, params.eps_p,
                                                                    params.k);
            }
            for (std::size_t m = 0; m < v.rows; ++m) {
                std::vector<double> p;
                if (defense.allocation == Allocation::dynamic_importance) {
                    p = epoch_p;
                } else {
                    const auto vhat =
                        privacy::clip_k(v.row(m), params.clip_c, params.k, /*use_abs=*/false);
                    p = privacy::response_probability(vhat, params.eps_p, params.k);
                }
                const auto fr = privacy::r3elu_forward(v.row(m), params, p, tunnel_rng, opts,
                                                       scales);
                channel.send(quantized_message(Direction::forward, iter, fr.output));
            }
            acct.charge(iter, params.eps_p, params.eps_l);
        } else if (fwd_defend && defense.mechanism == Mechanism::laplace_primitive) {
            // The whole step budget goes to the Laplace stage.
            const double scale =
                2.0 * static_cast<double>(cut) * defense.clip_c / step_eps;
            for (std::size_t m = 0; m < v.rows; ++m)
                channel.send(quantized_message(
                    Direction::forward, iter,
                    primitive_laplace_vector(relu_row(v.row(m)), 0.0, defense.clip_c, scale,
                                             tunnel_rng)));
            acct.charge(iter, 0.0, step_eps);
        } else {
            for (std::size_t m = 0; m < v.rows; ++m)
                channel.send(quantized_message(Direction::forward, iter, relu_row(v.row(m))));
            if (fwd_defend) acct.charge(iter, 0.0, step_eps); // dpsgd spends on gradients
        }

        // Partial loss back from the host, gated through the cut activation.
        Matrix delta(v.rows, cut);
        for (std::size_t m = 0; m < v.rows; ++m) {
            const TunnelMessage msg = expect_message(channel, Direction::backward, iter, cut);
            const auto row = payload_as_doubles(msg);
            if (hooks && hooks->on_partial_loss) hooks->on_partial_loss(iter, batch_ids[m], row);
            for (std::size_t j = 0; j < cut; ++j)
                delta(m, j) = v(m, j) > 0.0 ? row[j] : 0.0;
        }

        model.zero_grads();
        model.backward(delta);
        if (auto* lin = last_linear(model)) {
            tracker.update(importance::layer_neuron_importances(
                lin->weights, lin->weight_grad, lin->bias, lin->bias_grad));
        }
        if (fwd_defend && defense.mechanism == Mechanism::dpsgd_minimal)
            dpsgd_perturb_grads(model, defense.clip_c,
                                dpsgd_sigma(defense.clip_c, step_eps, defense.delta),
                                tunnel_rng);
        nn::optimizer_step(opt, model);
        result.iterations = iter;
    }

    result.budget_exhausted = feasible < cfg.planned_iterations();
    if (defense.forward_on()) {
        result.strong_composition_eps =
            fixed ? acct.strong_composition_total(defense.epsilon) : defense.epsilon;
        acct.append_ledger_csv(result.ledger_csv);
    }
    result.importance_csv = tracker.history_csv();

    if (cfg.eval_phase && cfg.test_rows > 0) {
        const Matrix v = model.forward(test_features, /*training=*/false);
        for (std::size_t m = 0; m < v.rows; ++m)
            channel.send(quantized_message(Direction::forward, 0, relu_row(v.row(m))));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Host loop

HostRunResult run_host_party(Channel& channel, nn::SequentialModel& embed,
                             nn::SequentialModel& tail, const Matrix& train_features,
                             const std::vector<int>& train_labels, const Matrix& test_features,
                             const std::vector<int>& test_labels, const ProtocolConfig& cfg,
                             const HostHooks* hooks) {
    cfg.validate();
    const std::size_t cut = embed.output_dim();
    const std::size_t ipe = cfg.iters_per_epoch();
    const std::size_t feasible = max_feasible_iterations(cfg);
    const auto& defense = cfg.defense;

    RngState tunnel_rng = RngState(cfg.seed).fork(kHostTunnelStream);
    nn::OptimizerState opt_embed{cfg.optimizer, cfg.learning_rate};
    nn::OptimizerState opt_tail{cfg.optimizer, cfg.learning_rate};
    importance::ImportanceTracker tracker(cut, ipe, cfg.planned_iterations());
    std::vector<double> snapshot(cut, 0.0);
    std::vector<double> epoch_p;

    const bool fixed = defense.schedule == privacy::Schedule::fixed_step;
    privacy::BudgetAccountant acct(
        "host", fixed ? defense.budget_cap : defense.epsilon, cfg.gamma(),
        cfg.planned_iterations(), defense.schedule, defense.delta);
    privacy::TunnelOptions opts{defense.draw, defense.backward_noise_all};

    std::vector<std::size_t> order;
    HostRunResult result;

    for (std::size_t iter = 1; iter <= feasible; ++iter) {
        const std::size_t epoch = (iter - 1) / ipe + 1;
        const std::size_t slot = (iter - 1) % ipe;
        if (slot == 0) {
            order = epoch_order(cfg.seed, epoch, cfg.train_rows);
            snapshot = tracker.values();
            epoch_p.clear();
        }
        const std::span<const std::size_t> batch_ids(order.data() + slot * cfg.batch_size,
                                                     cfg.batch_size);

        Matrix smashed(cfg.batch_size, cut);
        for (std::size_t m = 0; m < cfg.batch_size; ++m) {
            const TunnelMessage msg = expect_message(channel, Direction::forward, iter, cut);
            const auto row = payload_as_doubles(msg);
            if (hooks && hooks->on_smashed) hooks->on_smashed(iter, batch_ids[m], row);
            for (std::size_t j = 0; j < cut; ++j) smashed(m, j) = row[j];
        }

        const Matrix host_batch = gather_rows(train_features, batch_ids);
        std::vector<int> labels(cfg.batch_size);
        for (std::size_t m = 0; m < cfg.batch_size; ++m) labels[m] = train_labels[batch_ids[m]];

        const Matrix a_host = embed.forward(host_batch, /*training=*/true);
        MergeCache cache;
        const Matrix merged = merge_forward(smashed, a_host, cfg.merge, cache);
        const Matrix logits = tail.forward(merged, /*training=*/true);
        auto [loss, loss_grad] = nn::softmax_cross_entropy(logits, labels);
        result.losses.push_back(loss);

        embed.zero_grads();
        tail.zero_grads();
        const Matrix merged_grad = tail.backward(loss_grad);
        auto [guest_grad, host_grad] = merge_backward(merged_grad, cfg.merge, cache);
        embed.backward(host_grad);

        const double step_eps = fixed
                                    ? defense.epsilon
                                    : privacy::per_iteration_budget(defense.epsilon, iter);

        // The host's own partial loss stays untouched; only the guest-bound
        // rows pass through the tunnel.
        const bool bwd_defend = defense.backward_on();
        if (bwd_defend && defense.mechanism == Mechanism::r3elu) {
            const auto params = defense.params(cut, step_eps);
            std::vector<double> scales;
            if (defense.allocation == Allocation::dynamic_importance) {
                scales = privacy::dynamic_laplace_scales(snapshot, params);
                if (epoch_p.empty())
                    epoch_p = privacy::response_probability_dynamic(snapshot, params.eps_p,
                                                                    params.k);
            }
            for (std::size_t m = 0; m < cfg.batch_size; ++m) {
                std::vector<double> p;
                if (defense.allocation == Allocation::dynamic_importance) {
                    p = epoch_p;
                } else {
                    const auto dhat = privacy::clip_k(guest_grad.row(m), params.clip_c,
                                                      params.k, /*use_abs=*/true);
                    std::vector<double> mags(dhat.size());
                    for (std::size_t j = 0; j < dhat.size(); ++j) mags[j] = std::abs(dhat[j]);
                    p = privacy::response_probability(mags, params.eps_p, params.k);
                }
                const auto br = privacy::r3elu_backward(guest_grad.row(m), params, p,
                                                        tunnel_rng, opts, scales);
                channel.send(quantized_message(Direction::backward, iter, br.output));
            }
            acct.charge(iter, params.eps_p, params.eps_l);
        } else if (bwd_defend && defense.mechanism == Mechanism::laplace_primitive) {
            const double scale =
                2.0 * static_cast<double>(cut) * defense.clip_c / step_eps;
            for (std::size_t m = 0; m < cfg.batch_size; ++m)
                channel.send(quantized_message(
                    Direction::backward, iter,
                    primitive_laplace_vector(guest_grad.row(m), -defense.clip_c,
                                             defense.clip_c, scale, tunnel_rng)));
            acct.charge(iter, 0.0, step_eps);
        } else {
            for (std::size_t m = 0; m < cfg.batch_size; ++m)
                channel.send(quantized_message(Direction::backward, iter, guest_grad.row(m)));
            if (bwd_defend) acct.charge(iter, 0.0, step_eps);
        }

        if (auto* lin = first_linear(tail)) {
            auto fresh = importance::layer_input_importances(lin->weights, lin->weight_grad);
            fresh.resize(cut); // concat merge: the guest block comes first
            tracker.update(fresh);
        }
        if (bwd_defend && defense.mechanism == Mechanism::dpsgd_minimal) {
            const double sigma = dpsgd_sigma(defense.clip_c, step_eps, defense.delta);
            dpsgd_perturb_grads(embed, defense.clip_c, sigma, tunnel_rng);
            dpsgd_perturb_grads(tail, defense.clip_c, sigma, tunnel_rng);
        }
        nn::optimizer_step(opt_embed, embed);
        nn::optimizer_step(opt_tail, tail);
        result.iterations = iter;
    }

    result.budget_exhausted = feasible < cfg.planned_iterations();
    if (defense.backward_on()) {
        result.strong_composition_eps =
            fixed ? acct.strong_composition_total(defense.epsilon) : defense.epsilon;
        acct.append_ledger_csv(result.ledger_csv);
    }

    if (cfg.eval_phase && cfg.test_rows > 0) {
        Matrix smashed(cfg.test_rows, cut);
        for (std::size_t m = 0; m < cfg.test_rows; ++m) {
            const TunnelMessage msg = expect_message(channel, Direction::forward, 0, cut);
            for (std::size_t j = 0; j < cut; ++j) smashed(m, j) = msg.payload[j];
        }
        const Matrix a_host = embed.forward(test_features, /*training=*/false);
        MergeCache cache;
        const Matrix merged = merge_forward(smashed, a_host, cfg.merge, cache);
        const Matrix logits = tail.forward(merged, /*training=*/false);
        result.metric = evaluate_logits(logits, test_labels, cfg.task, cfg.hit_k);
    }
    return result;
}

SplitTrainResult train_split(const Matrix& guest_train, const Matrix& host_train,
                             const std::vector<int>& train_labels, const Matrix& guest_test,
                             const Matrix& host_test, const std::vector<int>& test_labels,
                             ModelArch arch, std::size_t classes, const ProtocolConfig& cfg,
                             Channel* guest_channel, Channel* host_channel,
                             const GuestHooks* guest_hooks, const HostHooks* host_hooks) {
    RngState guest_rng = RngState(cfg.seed).fork(kGuestModelStream);
    RngState host_rng = RngState(cfg.seed).fork(kHostEmbedStream);
    SplitModel model = build_split_model(arch, guest_train.cols, host_train.cols, classes,
                                         cfg.merge, guest_rng, host_rng);

    std::unique_ptr<Channel> inproc_guest, inproc_host;
    if (!guest_channel || !host_channel) {
        auto pair = make_inproc_pair();
        inproc_guest = std::move(pair.first);
        inproc_host = std::move(pair.second);
        guest_channel = inproc_guest.get();
        host_channel = inproc_host.get();
    }

    SplitTrainResult result;
    std::exception_ptr guest_error;
    std::thread guest_thread([&] {
        try {
            result.guest = run_guest_party(*guest_channel, model.guest, guest_train,
                                           guest_test, cfg, guest_hooks);
        } catch (...) {
            guest_error = std::current_exception();
        }
    });
    try {
        result.host = run_host_party(*host_channel, model.host_embed, model.host_tail,
                                     host_train, train_labels, host_test, test_labels, cfg,
                                     host_hooks);
    } catch (...) {
        guest_thread.join();
        throw;
    }
    guest_thread.join();
    if (guest_error) std::rethrow_exception(guest_error);
    result.model = std::move(model);
    return result;
}

Matrix split_logits_eval(SplitModel& model, const Matrix& guest_features,
                         const Matrix& host_features) {
    const Matrix v = model.guest.forward(guest_features, /*training=*/false);
    Matrix a_guest(v.rows, v.cols);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        a_guest.data[i] = static_cast<double>(static_cast<float>(std::max(0.0, v.data[i])));
    const Matrix a_host = model.host_embed.forward(host_features, /*training=*/false);
    MergeCache cache;
    const Matrix merged = merge_forward(a_guest, a_host, model.merge, cache);
    return model.host_tail.forward(merged, /*training=*/false);
}

double evaluate_logits(const Matrix& logits, const std::vector<int>& labels, TaskKind task,
                       std::size_t hit_k) {
    if (task == TaskKind::classification) return data::classification_accuracy(logits, labels);
    return data::hit_ratio_at_k(logits, labels, hit_k);
}

} // namespace r3split::splitnn
