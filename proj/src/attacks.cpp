#include "r3split/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <thread>

#include "r3split/transport.hpp"

namespace r3split::attacks {

using splitnn::Direction;
using splitnn::ProtocolConfig;
using splitnn::TunnelMessage;

AttackerSide side_from_string(const std::string& s) {
    if (s == "host") return AttackerSide::host;
    if (s == "guest") return AttackerSide::guest;
    throw std::invalid_argument("unknown attacker side '" + s + "'");
}

std::string to_string(AttackerSide s) {
    return s == AttackerSide::host ? "host" : "guest";
}

double mean_squared_error(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b) || a.rows == 0)
        throw std::invalid_argument("mean_squared_error: shape mismatch or empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double logistic_loss(const Matrix& logits, const std::vector<double>& targets, Matrix& grad) {
    if (logits.cols != 1 || logits.rows != targets.size())
        throw std::invalid_argument("logistic_loss: expected one logit per target row");
    grad = Matrix(logits.rows, 1);
    double loss = 0.0;
    const double m = static_cast<double>(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double x = logits(i, 0);
        const double y = targets[i];
        // softplus(x) - y*x, numerically stable
        loss += (x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x))) - y * x;
        const double sig = 1.0 / (1.0 + std::exp(-x));
        grad(i, 0) = (sig - y) / m;
    }
    return loss / m;
}

namespace {

// Latest channel observation per dataset row.
struct ChannelCapture {
    std::map<std::size_t, std::vector<double>> latest;

    void record(std::size_t row, const std::vector<double>& payload) { latest[row] = payload; }

    std::vector<std::size_t> rows() const {
        std::vector<std::size_t> out;
        out.reserve(latest.size());
        for (const auto& [row, _] : latest) out.push_back(row);
        return out;
    }
};

Matrix rows_to_matrix(const std::vector<std::size_t>& ids,
                      const std::map<std::size_t, std::vector<double>>& capture) {
    const std::size_t width = capture.begin()->second.size();
    Matrix out(ids.size(), width);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& row = capture.at(ids[i]);
        for (std::size_t j = 0; j < width; ++j) out(i, j) = row[j];
    }
    return out;
}

Matrix gather(const Matrix& src, const std::vector<std::size_t>& ids) {
    Matrix out(ids.size(), src.cols);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < src.cols; ++j) out(i, j) = src(ids[i], j);
    return out;
}

std::vector<double> column_means(const Matrix& m) {
    std::vector<double> mean(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) mean[j] += m(i, j);
    for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(m.rows, 1));
    return mean;
}

Matrix broadcast_row(const std::vector<double>& row, std::size_t rows) {
    Matrix out(rows, row.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < row.size(); ++j) out(i, j) = row[j];
    return out;
}

void clip_weights(nn::SequentialModel& model, double bound) {
    if (bound <= 0.0) return;
    for (auto& s : model.param_slices())
        for (std::size_t i = 0; i < s.size; ++i)
            s.value[i] = std::clamp(s.value[i], -bound, bound);
}

// Runs the victim pipeline and returns the latest observation per row on the
// attacker's channel.
ChannelCapture observe_victim(const Matrix& guest_train, const Matrix& host_train,
                              const std::vector<int>& labels, splitnn::ModelArch arch,
                              std::size_t classes, const ProtocolConfig& cfg,
                              AttackerSide side) {
    ChannelCapture capture;
    splitnn::GuestHooks guest_hooks;
    splitnn::HostHooks host_hooks;
    if (side == AttackerSide::host) {
        host_hooks.on_smashed = [&](std::size_t, std::size_t row,
                                    const std::vector<double>& payload) {
            capture.record(row, payload);
        };
    } else {
        guest_hooks.on_partial_loss = [&](std::size_t, std::size_t row,
                                          const std::vector<double>& payload) {
            capture.record(row, payload);
        };
    }
    const Matrix empty_guest(0, guest_train.cols);
    const Matrix empty_host(0, host_train.cols);
    ProtocolConfig run_cfg = cfg;
    run_cfg.eval_phase = false;
    run_cfg.test_rows = 0;
    splitnn::train_split(guest_train, host_train, labels, empty_guest, empty_host, {}, arch,
                         classes, run_cfg, nullptr, nullptr, &guest_hooks, &host_hooks);
    return capture;
}

} // namespace

PropertyInferenceResult run_property_inference(
    const Matrix& guest_train, const Matrix& host_train, const std::vector<int>& labels,
    const std::vector<int>& property, splitnn::ModelArch arch, std::size_t classes,
    const ProtocolConfig& victim_cfg, const PropertyInferenceConfig& atk) {
    if (property.size() != guest_train.rows)
        throw std::invalid_argument("property inference: property column misaligned");
    int max_prop = 0;
    for (int p : property) {
        if (p < 0) throw std::invalid_argument("property inference: negative property label");
        max_prop = std::max(max_prop, p);
    }
    const std::size_t prop_classes = static_cast<std::size_t>(max_prop) + 1;
    if (prop_classes < 2)
        throw std::invalid_argument("property inference: need at least 2 property classes");

    ChannelCapture capture = observe_victim(guest_train, host_train, labels, arch, classes,
                                            victim_cfg, atk.side);
    auto ids = capture.rows();
    RngState rng(atk.seed);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.u64() % i]);
    const std::size_t shadow_n =
        std::max<std::size_t>(1, static_cast<std::size_t>(ids.size() * atk.shadow_fraction));
    const std::vector<std::size_t> shadow_ids(ids.begin(), ids.begin() + shadow_n);
    const std::vector<std::size_t> holdout_ids(ids.begin() + shadow_n, ids.end());
    if (holdout_ids.empty())
        throw std::invalid_argument("property inference: no holdout rows left");

    const Matrix shadow_x = rows_to_matrix(shadow_ids, capture.latest);
    const Matrix holdout_x = rows_to_matrix(holdout_ids, capture.latest);
    std::vector<int> shadow_y(shadow_ids.size()), holdout_y(holdout_ids.size());
    for (std::size_t i = 0; i < shadow_ids.size(); ++i) shadow_y[i] = property[shadow_ids[i]];
    for (std::size_t i = 0; i < holdout_ids.size(); ++i)
        holdout_y[i] = property[holdout_ids[i]];

    RngState init_rng = rng.fork(1);
    nn::SequentialModel f(shadow_x.cols);
    f.add_linear(64, init_rng).add_relu().add_linear(prop_classes, init_rng);
    nn::OptimizerState opt{nn::OptimizerKind::adam, atk.learning_rate};

    const std::size_t batch = std::min(atk.batch, shadow_ids.size());
    std::vector<std::size_t> batch_ids(batch);
    std::vector<int> batch_y(batch);
    for (std::size_t it = 0; it < atk.iterations; ++it) {
        Matrix bx(batch, shadow_x.cols);
        for (std::size_t m = 0; m < batch; ++m) {
            batch_ids[m] = rng.u64() % shadow_ids.size();
            batch_y[m] = shadow_y[batch_ids[m]];
            for (std::size_t j = 0; j < shadow_x.cols; ++j)
                bx(m, j) = shadow_x(batch_ids[m], j);
        }
        const Matrix logits = f.forward(bx, true);
        const auto [loss, grad] = nn::softmax_cross_entropy(logits, batch_y);
        (void)loss;
        f.zero_grads();
        f.backward(grad);
        nn::optimizer_step(opt, f);
    }

    PropertyInferenceResult result;
    result.shadow_rows = shadow_ids.size();
    result.holdout_rows = holdout_ids.size();
    result.property_classes = prop_classes;
    const Matrix holdout_logits = f.forward(holdout_x, false);
    result.attack_accuracy = data::classification_accuracy(holdout_logits, holdout_y);
    return result;
}

ReconstructionResult run_reconstruction(const Matrix& guest_train, const Matrix& host_train,
                                        const std::vector<int>& labels,
                                        splitnn::ModelArch arch, std::size_t classes,
                                        const ProtocolConfig& victim_cfg,
                                        const ReconstructionConfig& atk) {
    const Matrix& target = atk.side == AttackerSide::host ? guest_train : host_train;

    ChannelCapture capture = observe_victim(guest_train, host_train, labels, arch, classes,
                                            victim_cfg, atk.side);
    auto ids = capture.rows();
    if (ids.size() < 4)
        throw std::invalid_argument("reconstruction: too few captured rows");
    RngState rng(atk.seed);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.u64() % i]);
    const std::size_t shadow_n =
        std::max<std::size_t>(1, static_cast<std::size_t>(ids.size() * atk.shadow_fraction));
    const std::vector<std::size_t> shadow_ids(ids.begin(), ids.begin() + shadow_n);
    const std::vector<std::size_t> holdout_ids(ids.begin() + shadow_n, ids.end());
    if (holdout_ids.empty())
        throw std::invalid_argument("reconstruction: no holdout rows left");

    const Matrix shadow_obs = rows_to_matrix(shadow_ids, capture.latest);
    const Matrix shadow_truth = gather(target, shadow_ids);
    const std::size_t obs_dim = shadow_obs.cols;
    const std::size_t feat_dim = target.cols;

    RngState init_rng = rng.fork(1);
    nn::SequentialModel gen(atk.latent_dim + obs_dim);
    gen.add_linear(64, init_rng).add_relu().add_linear(feat_dim, init_rng).add_sigmoid();
    nn::SequentialModel disc(feat_dim);
    disc.add_linear(64, init_rng).add_relu().add_linear(1, init_rng);
    nn::OptimizerState opt_g{nn::OptimizerKind::adam, atk.learning_rate};
    nn::OptimizerState opt_d{nn::OptimizerKind::adam, atk.learning_rate};

    const std::size_t batch = std::min(atk.batch, shadow_ids.size());
    auto make_gen_input = [&](const Matrix& obs, RngState& noise) {
        Matrix in(obs.rows, atk.latent_dim + obs_dim);
        for (std::size_t m = 0; m < obs.rows; ++m) {
            for (std::size_t j = 0; j < atk.latent_dim; ++j) in(m, j) = noise.normal();
            for (std::size_t j = 0; j < obs_dim; ++j) in(m, atk.latent_dim + j) = obs(m, j);
        }
        return in;
    };

    for (std::size_t it = 0; it < atk.iterations; ++it) {
        Matrix obs(batch, obs_dim);
        Matrix truth(batch, feat_dim);
        for (std::size_t m = 0; m < batch; ++m) {
            const std::size_t pick = rng.u64() % shadow_ids.size();
            for (std::size_t j = 0; j < obs_dim; ++j) obs(m, j) = shadow_obs(pick, j);
            for (std::size_t j = 0; j < feat_dim; ++j) truth(m, j) = shadow_truth(pick, j);
        }

        const Matrix fake = gen.forward(make_gen_input(obs, rng), true);

        // Discriminator: shadow-real rows against generated rows.
        Matrix stacked(2 * batch, feat_dim);
        std::vector<double> targets(2 * batch, 0.0);
        for (std::size_t m = 0; m < batch; ++m) {
            for (std::size_t j = 0; j < feat_dim; ++j) {
                stacked(m, j) = truth(m, j);
                stacked(batch + m, j) = fake(m, j);
            }
            targets[m] = 1.0;
        }
        const Matrix d_logits = disc.forward(stacked, true);
        Matrix d_grad;
        logistic_loss(d_logits, targets, d_grad);
        disc.zero_grads();
        disc.backward(d_grad);
        nn::optimizer_step(opt_d, disc);

        // Generator: non-saturating adversarial term plus the shadow anchor.
        const Matrix fake_logits = disc.forward(fake, true);
        Matrix adv_grad(batch, 1);
        for (std::size_t m = 0; m < batch; ++m) {
            const double sig = 1.0 / (1.0 + std::exp(-fake_logits(m, 0)));
            adv_grad(m, 0) = (sig - 1.0) / static_cast<double>(batch);
        }
        disc.zero_grads();
        const Matrix adv_input_grad = disc.backward(adv_grad);
        Matrix g_grad(batch, feat_dim);
        const double sup_scale =
            2.0 * atk.supervised_weight / static_cast<double>(batch * feat_dim);
        for (std::size_t m = 0; m < batch; ++m)
            for (std::size_t j = 0; j < feat_dim; ++j)
                g_grad(m, j) = adv_input_grad(m, j) + sup_scale * (fake(m, j) - truth(m, j));
        gen.zero_grads();
        gen.backward(g_grad);
        nn::optimizer_step(opt_g, gen);
    }

    ReconstructionResult result;
    result.holdout_rows = holdout_ids.size();
    const Matrix holdout_obs = rows_to_matrix(holdout_ids, capture.latest);
    const Matrix holdout_truth = gather(target, holdout_ids);
    RngState eval_noise = rng.fork(2);
    const Matrix recon = gen.forward(make_gen_input(holdout_obs, eval_noise), false);
    result.mse = mean_squared_error(recon, holdout_truth);
    result.mean_baseline_mse =
        mean_squared_error(broadcast_row(column_means(shadow_truth), holdout_truth.rows),
                           holdout_truth);
    return result;
}

FshaResult run_fsha(const Matrix& guest_victim, const Matrix& shadow_guest,
                    const ProtocolConfig& victim_cfg, splitnn::ModelArch arch,
                    const FshaConfig& atk) {
    if (shadow_guest.rows == 0)
        throw std::invalid_argument("fsha: shadow dataset is required");
    if (guest_victim.rows == 0)
        throw std::invalid_argument("fsha: victim rows are required");
    if (victim_cfg.batch_size != atk.batch)
        throw std::invalid_argument("fsha: attack batch must match the victim batch size");
    if (guest_victim.cols != shadow_guest.cols)
        throw std::invalid_argument("fsha: victim/shadow width mismatch");

    // Vertical setting: one row universe. The guest trains over victim rows
    // and shadow rows together; the attacker knows the guest-side features of
    // the shadow rows only, and the two sets stay disjoint.
    const std::size_t victim_n = guest_victim.rows;
    Matrix guest_train(victim_n + shadow_guest.rows, guest_victim.cols);
    for (std::size_t r = 0; r < victim_n; ++r)
        for (std::size_t j = 0; j < guest_victim.cols; ++j)
            guest_train(r, j) = guest_victim(r, j);
    for (std::size_t r = 0; r < shadow_guest.rows; ++r)
        for (std::size_t j = 0; j < guest_victim.cols; ++j)
            guest_train(victim_n + r, j) = shadow_guest(r, j);

    ProtocolConfig cfg = victim_cfg;
    cfg.train_rows = guest_train.rows;
    cfg.eval_phase = false;
    cfg.test_rows = 0;
    cfg.validate();

    RngState guest_rng = RngState(cfg.seed).fork(splitnn::kGuestModelStream);
    RngState host_rng = RngState(cfg.seed).fork(splitnn::kHostEmbedStream);
    splitnn::SplitModel model = splitnn::build_split_model(
        arch, guest_train.cols, guest_train.cols, /*classes=*/2, cfg.merge, guest_rng,
        host_rng);
    const std::size_t cut = model.cut_width;
    const std::size_t feat = guest_train.cols;

    auto [guest_channel, host_channel] = splitnn::make_inproc_pair();

    const Matrix empty_guest(0, guest_train.cols);
    std::exception_ptr guest_error;
    std::thread guest_thread([&] {
        try {
            splitnn::run_guest_party(*guest_channel, model.guest, guest_train, empty_guest,
                                     cfg, nullptr);
        } catch (...) {
            guest_error = std::current_exception();
        }
    });

    FshaResult result;
    try {
        RngState rng(atk.seed);
        RngState init_rng = rng.fork(1);
        // The pilot mirrors the victim pathway including the cut activation:
        // it is fitted as a surrogate of the (hijacked) guest on the shadow
        // rows, which grounds the inverse in real (code, sample) pairs.
        RngState pilot_rng = init_rng.fork(2);
        RngState dummy_rng = init_rng.fork(3);
        splitnn::SplitModel pilot_model = splitnn::build_split_model(
            arch, feat, feat, 2, victim_cfg.merge, pilot_rng, dummy_rng);
        nn::SequentialModel pilot = std::move(pilot_model.guest);
        pilot.add_relu();
        nn::SequentialModel inverse(cut);
        inverse.add_linear(256, init_rng).add_relu().add_linear(feat, init_rng).add_sigmoid();
        nn::SequentialModel disc(cut);
        disc.add_linear(64, init_rng).add_relu().add_linear(1, init_rng);
        nn::OptimizerState opt_pilot{nn::OptimizerKind::adam, atk.learning_rate};
        nn::OptimizerState opt_inverse{nn::OptimizerKind::adam, atk.learning_rate};
        nn::OptimizerState opt_disc{nn::OptimizerKind::adam, atk.learning_rate};

        ChannelCapture capture;           // victim rows
        ChannelCapture shadow_capture;    // shadow rows, keyed by shadow index
        std::vector<std::size_t> shadow_seen;
        const std::size_t feasible = splitnn::max_feasible_iterations(cfg);
        const std::size_t ipe = cfg.iters_per_epoch();
        std::vector<std::size_t> order;
        const std::size_t batch = cfg.batch_size;

        for (std::size_t iter = 1; iter <= feasible; ++iter) {
            const std::size_t epoch = (iter - 1) / ipe + 1;
            const std::size_t slot = (iter - 1) % ipe;
            if (slot == 0) order = splitnn::epoch_order(cfg.seed, epoch, cfg.train_rows);

            Matrix smashed(batch, cut);
            for (std::size_t m = 0; m < batch; ++m) {
                const TunnelMessage msg = host_channel->receive();
                if (msg.direction != Direction::forward || msg.iteration != iter ||
                    msg.payload.size() != cut)
                    throw splitnn::TransportError("fsha: protocol violation");
                for (std::size_t j = 0; j < cut; ++j)
                    smashed(m, j) = static_cast<double>(msg.payload[j]);
                const std::size_t row = order[slot * batch + m];
                auto payload = std::vector<double>(smashed.row(m).begin(),
                                                   smashed.row(m).end());
                if (row < victim_n) {
                    capture.record(row, payload);
                } else {
                    if (!shadow_capture.latest.count(row - victim_n))
                        shadow_seen.push_back(row - victim_n);
                    shadow_capture.record(row - victim_n, payload);
                }
            }

            if (!shadow_seen.empty()) {
                // Surrogate step: pull the pilot onto the guest's observed
                // behavior for known shadow rows, and fit the inverse on the
                // same pairs (with jitter so it tolerates nearby codes).
                Matrix xs(batch, feat), cs(batch, cut);
                for (std::size_t m = 0; m < batch; ++m) {
                    const std::size_t pick =
                        shadow_seen[rng.u64() % shadow_seen.size()];
                    const auto& code = shadow_capture.latest.at(pick);
                    for (std::size_t j = 0; j < feat; ++j) xs(m, j) = shadow_guest(pick, j);
                    for (std::size_t j = 0; j < cut; ++j) cs(m, j) = code[j];
                }
                const Matrix pilot_code = pilot.forward(xs, true);
                Matrix fit_grad(batch, cut);
                const double fit_scale = 2.0 / static_cast<double>(batch * cut);
                for (std::size_t i = 0; i < fit_grad.data.size(); ++i)
                    fit_grad.data[i] = fit_scale * (pilot_code.data[i] - cs.data[i]);
                pilot.zero_grads();
                pilot.backward(fit_grad);
                nn::optimizer_step(opt_pilot, pilot);

                // The inverse learns on the pilot's own codes, never on the
                // raw channel; whatever falls outside that manifold at
                // attack time decodes as an extrapolation.
                Matrix noisy = pilot_code;
                if (atk.denoise_sigma > 0.0)
                    for (auto& v : noisy.data) v += atk.denoise_sigma * rng.normal();
                const Matrix recon = inverse.forward(noisy, true);
                Matrix inv_grad(batch, feat);
                const double inv_scale = 2.0 / static_cast<double>(batch * feat);
                for (std::size_t i = 0; i < inv_grad.data.size(); ++i)
                    inv_grad.data[i] = inv_scale * (recon.data[i] - xs.data[i]);
                inverse.zero_grads();
                inverse.backward(inv_grad);
                nn::optimizer_step(opt_inverse, inverse);

                // Distinguisher: pilot codes real, victim smashed fake.
                Matrix stacked(2 * batch, cut);
                std::vector<double> targets(2 * batch, 0.0);
                for (std::size_t m = 0; m < batch; ++m) {
                    for (std::size_t j = 0; j < cut; ++j) {
                        stacked(m, j) = pilot_code(m, j);
                        stacked(batch + m, j) = smashed(m, j);
                    }
                    targets[m] = 1.0;
                }
                const Matrix d_logits = disc.forward(stacked, true);
                Matrix d_grad;
                result.final_distinguisher_loss = logistic_loss(d_logits, targets, d_grad);
                if (result.final_distinguisher_loss > atk.d_throttle) {
                    disc.zero_grads();
                    disc.backward(d_grad);
                    nn::optimizer_step(opt_disc, disc);
                    clip_weights(disc, atk.critic_clip);
                }
            }

            // Substituted gradient: hold the guest's representation inside
            // the distinguisher's "pilot" region (non-saturating form). The
            // task loss never enters.
            const Matrix s_logits = disc.forward(smashed, true);
            Matrix hijack(batch, 1);
            for (std::size_t m = 0; m < batch; ++m) {
                const double sig = 1.0 / (1.0 + std::exp(-s_logits(m, 0)));
                hijack(m, 0) = (sig - 1.0) / static_cast<double>(batch);
            }
            disc.zero_grads();
            Matrix delta = disc.backward(hijack);
            for (auto& g : delta.data) g *= atk.gradient_scale;
            for (std::size_t m = 0; m < batch; ++m)
                host_channel->send(splitnn::quantized_message(Direction::backward, iter,
                                                              delta.row(m)));
            result.victim_iterations = iter;
        }

        guest_thread.join();
        if (guest_error) std::rethrow_exception(guest_error);

        // Invert the captured activations of the victim's rows.
        auto ids = capture.rows();
        if (ids.size() > atk.eval_rows) ids.resize(atk.eval_rows);
        const Matrix obs = rows_to_matrix(ids, capture.latest);
        const Matrix truth = gather(guest_victim, ids);
        const Matrix recon = inverse.forward(obs, false);
        result.mse = mean_squared_error(recon, truth);
        result.mean_baseline_mse =
            mean_squared_error(broadcast_row(column_means(shadow_guest), truth.rows), truth);

        if (atk.grid_dir) {
            const std::size_t n = std::min<std::size_t>(16, recon.rows);
            Matrix sample(n, feat), sample_truth(n, feat);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < feat; ++j) {
                    sample(i, j) = recon(i, j);
                    sample_truth(i, j) = truth(i, j);
                }
            std::filesystem::create_directories(*atk.grid_dir);
            data::write_pgm(data::tile_images(sample, atk.image_rows, atk.image_cols, 8),
                            *atk.grid_dir + "/fsha_reconstruction.pgm");
            data::write_pgm(data::tile_images(sample_truth, atk.image_rows, atk.image_cols, 8),
                            *atk.grid_dir + "/fsha_target.pgm");
        }
    } catch (...) {
        if (guest_thread.joinable()) guest_thread.join();
        throw;
    }
    return result;
}

} // namespace r3split::attacks
