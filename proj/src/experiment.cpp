#include "r3split/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "r3split/attacks.hpp"
#include "r3split/transport.hpp"

namespace r3split::cli {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
image_half_split(std::size_t rows, std::size_t cols) {
    std::vector<std::size_t> left, right;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            (c < cols / 2 ? left : right).push_back(r * cols + c);
    return {left, right};
}

Matrix take_rows(const Matrix& src, std::size_t begin, std::size_t count) {
    Matrix out(count, src.cols);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < src.cols; ++j) out(i, j) = src(begin + i, j);
    return out;
}

data::Dataset subsample(data::Dataset ds, std::size_t cap) {
    if (cap == 0 || cap >= ds.rows()) return ds;
    data::Dataset out;
    out.meta = ds.meta;
    out.features = take_rows(ds.features, 0, cap);
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + cap);
    if (!ds.property.empty())
        out.property.assign(ds.property.begin(), ds.property.begin() + cap);
    return out;
}

std::string metrics_header() {
    return "# r3split metrics schema v1\n"
           "dataset,defense,protect,epsilon,seed,utility,attack,attack_metric\n";
}

std::string metrics_row(const std::string& dataset, const std::string& defense,
                        const std::string& protect, double epsilon, std::uint64_t seed,
                        double utility, const std::string& attack, double attack_metric) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.12g,%llu,%.12g,%s,%.12g\n", dataset.c_str(),
                  defense.c_str(), protect.c_str(), epsilon,
                  static_cast<unsigned long long>(seed), utility, attack.c_str(),
                  attack_metric);
    return buf;
}

std::vector<double> sweep_points(const RunConfig& cfg) {
    if (!cfg.run.sweep.empty()) return cfg.run.sweep;
    return {cfg.privacy.epsilon};
}

splitnn::SplitTrainResult train_point(const RunConfig& cfg, const LoadedData& data,
                                      const splitnn::ProtocolConfig& proto) {
    if (cfg.run.transport == TransportKind::inproc) {
        return splitnn::train_split(data.guest_train, data.host_train, data.train_labels,
                                    data.guest_test, data.host_test, data.test_labels,
                                    data.arch, data.classes, proto);
    }
    // Loopback sockets on an ephemeral port: same parties, real frames on
    // the wire.
    splitnn::TcpListener listener(0);
    std::unique_ptr<splitnn::Channel> guest_channel;
    std::exception_ptr connect_error;
    std::thread connector([&] {
        try {
            guest_channel = splitnn::tcp_connect("127.0.0.1", listener.port());
        } catch (...) {
            connect_error = std::current_exception();
        }
    });
    std::unique_ptr<splitnn::Channel> host_channel = listener.accept_channel();
    connector.join();
    if (connect_error) std::rethrow_exception(connect_error);
    return splitnn::train_split(data.guest_train, data.host_train, data.train_labels,
                                data.guest_test, data.host_test, data.test_labels, data.arch,
                                data.classes, proto, guest_channel.get(), host_channel.get());
}

double run_attack_point(const RunConfig& cfg, const LoadedData& data,
                        const splitnn::ProtocolConfig& proto, const std::string& out_dir);

} // namespace

std::string format_point_suffix(double epsilon, std::uint64_t seed) {
    return "_eps" + fmt_g(epsilon) + "_seed" + std::to_string(seed);
}

LoadedData load_and_partition(const RunConfig& cfg, std::uint64_t seed) {
    LoadedData out;
    data::Dataset train, test;

    if (cfg.dataset.kind == DatasetKind::synth) {
        data::RecsysSpec spec;
        spec.users = cfg.dataset.users;
        spec.items = cfg.dataset.items;
        spec.embedding_dim = cfg.dataset.dim;
        spec.interactions_per_user = cfg.dataset.interactions;
        spec.property_correlation = cfg.dataset.correlation;
        RngState rng(seed ^ 0x5d5345545253ULL);
        data::Dataset all = data::synth_recsys(spec, rng);
        // Last interaction of every user becomes the test row.
        const std::size_t k = spec.interactions_per_user;
        for (std::size_t row = 0; row < all.rows(); ++row) {
            const bool is_test = (row % k) == k - 1;
            data::Dataset& dst = is_test ? test : train;
            if (dst.features.cols == 0) dst.features = Matrix(0, all.features.cols);
            dst.features.data.insert(dst.features.data.end(),
                                     all.features.data.begin() + row * all.features.cols,
                                     all.features.data.begin() + (row + 1) * all.features.cols);
            dst.features.rows += 1;
            dst.labels.push_back(all.labels[row]);
            dst.property.push_back(all.property[row]);
        }
        train.meta = test.meta = all.meta;
        out.name = "synth";
    } else {
        std::string dir = cfg.dataset.kind == DatasetKind::digits ? cfg.dataset.data_dir
                                                                  : cfg.dataset.mnist_dir;
        std::string train_img, train_lab, test_img, test_lab;
        if (cfg.dataset.kind == DatasetKind::digits) {
            train_img = dir + "/digits-train-images.idx3-ubyte";
            train_lab = dir + "/digits-train-labels.idx1-ubyte";
            test_img = dir + "/digits-test-images.idx3-ubyte";
            test_lab = dir + "/digits-test-labels.idx1-ubyte";
            out.name = "digits";
        } else {
            if (dir.empty()) {
                const char* env = std::getenv("MNIST_DIR");
                if (!env)
                    throw std::runtime_error("mnist dataset: set mnist_dir or MNIST_DIR");
                dir = env;
            }
            train_img = dir + "/train-images-idx3-ubyte";
            train_lab = dir + "/train-labels-idx1-ubyte";
            test_img = dir + "/t10k-images-idx3-ubyte";
            test_lab = dir + "/t10k-labels-idx1-ubyte";
            out.name = "mnist";
        }
        train = data::load_mnist_idx(train_img, train_lab);
        test = data::load_mnist_idx(test_img, test_lab);
    }

    train = subsample(std::move(train), cfg.dataset.train_rows);
    test = subsample(std::move(test), cfg.dataset.test_rows);

    splitnn::PartitionSpec spec;
    if (cfg.dataset.kind == DatasetKind::synth) {
        const std::size_t gw = cfg.split.guest_width ? cfg.split.guest_width : 96;
        spec = splitnn::PartitionSpec::contiguous(train.features.cols, gw, cfg.split.padding);
        out.arch = splitnn::ModelArch::recsys;
    } else {
        const std::size_t side = static_cast<std::size_t>(std::lround(
            std::sqrt(static_cast<double>(train.features.cols))));
        auto [left, right] = image_half_split(side, side);
        spec.guest_indices = std::move(left);
        spec.host_indices = std::move(right);
        spec.padding = cfg.split.padding;
        out.arch = splitnn::ModelArch::mnist_mlp;
        out.image_rows = side;
        out.image_cols = cfg.split.padding ? side : side / 2;
    }

    auto [gtr, htr] = splitnn::vertical_partition(train.features, spec);
    auto [gte, hte] = splitnn::vertical_partition(test.features, spec);
    out.guest_train = std::move(gtr);
    out.host_train = std::move(htr);
    out.guest_test = std::move(gte);
    out.host_test = std::move(hte);
    out.train_labels = train.labels;
    out.test_labels = test.labels;
    out.train_property = train.property;
    out.classes = train.meta.classes;
    out.task = cfg.dataset.task;
    return out;
}

splitnn::ProtocolConfig build_protocol(const RunConfig& cfg, const LoadedData& data,
                                       double epsilon, std::uint64_t seed) {
    splitnn::ProtocolConfig proto;
    proto.train_rows = data.guest_train.rows;
    proto.test_rows = data.guest_test.rows;
    proto.batch_size = cfg.train.batch;
    proto.epochs = cfg.train.epochs;
    proto.seed = seed;
    proto.merge = cfg.split.merge;
    proto.task = data.task;
    proto.hit_k = 10;
    proto.optimizer = cfg.train.optimizer;
    proto.learning_rate = cfg.train.lr;

    proto.defense.protect = cfg.privacy.protect;
    proto.defense.mechanism = cfg.privacy.kind;
    proto.defense.epsilon = epsilon;
    proto.defense.p_ratio = cfg.privacy.ratio;
    proto.defense.k = cfg.privacy.k;
    proto.defense.clip_c = cfg.privacy.clip_c;
    proto.defense.draw = cfg.privacy.draw;
    proto.defense.backward_noise_all = cfg.privacy.backward_noise_all;
    proto.defense.allocation = cfg.privacy.allocation;
    proto.defense.schedule = cfg.privacy.schedule;
    proto.defense.budget_cap = cfg.privacy.budget_cap;
    proto.defense.delta = cfg.privacy.delta;
    proto.validate();
    return proto;
}

namespace {

double run_attack_point(const RunConfig& cfg, const LoadedData& data,
                        const splitnn::ProtocolConfig& proto, const std::string& out_dir) {
    switch (cfg.attack.kind) {
    case AttackKind::inference: {
        attacks::PropertyInferenceConfig atk;
        atk.side = cfg.attack.side;
        atk.iterations = cfg.attack.iterations;
        atk.shadow_fraction = cfg.attack.shadow_fraction;
        atk.seed = proto.seed ^ 0xa77ac4ULL;
        return attacks::run_property_inference(data.guest_train, data.host_train,
                                               data.train_labels, data.train_property,
                                               data.arch, data.classes, proto, atk)
            .attack_accuracy;
    }
    case AttackKind::reconstruction: {
        attacks::ReconstructionConfig atk;
        atk.side = cfg.attack.side;
        atk.iterations = cfg.attack.iterations;
        atk.shadow_fraction = cfg.attack.shadow_fraction;
        atk.latent_dim = cfg.attack.latent;
        atk.learning_rate = cfg.attack.attack_lr;
        atk.seed = proto.seed ^ 0xa77ac4ULL;
        return attacks::run_reconstruction(data.guest_train, data.host_train,
                                           data.train_labels, data.arch, data.classes, proto,
                                           atk)
            .mse;
    }
    case AttackKind::fsha: {
        // Disjoint victim/shadow halves of the guest's rows; both flow
        // through training.
        const std::size_t victim_n = data.guest_train.rows / 2;
        const Matrix victim = take_rows(data.guest_train, 0, victim_n);
        const Matrix shadow =
            take_rows(data.guest_train, victim_n, data.guest_train.rows - victim_n);
        splitnn::ProtocolConfig fsha_proto = proto;
        fsha_proto.train_rows = data.guest_train.rows;
        fsha_proto.test_rows = 0;
        fsha_proto.eval_phase = false;
        const std::size_t ipe =
            std::max<std::size_t>(1, data.guest_train.rows / proto.batch_size);
        fsha_proto.epochs = std::max<std::size_t>(1, cfg.attack.iterations / ipe);

        attacks::FshaConfig atk;
        atk.batch = proto.batch_size;
        atk.gradient_scale = cfg.attack.scale;
        atk.learning_rate = cfg.attack.attack_lr;
        atk.seed = proto.seed ^ 0xf5aaULL;
        if (data.image_rows > 0) {
            atk.grid_dir = out_dir + "/grids";
            atk.image_rows = data.image_rows;
            atk.image_cols = data.image_cols;
        }
        return attacks::run_fsha(victim, shadow, fsha_proto, data.arch, atk).mse;
    }
    default:
        return 0.0;
    }
}

} // namespace

namespace {

// One party of a two-process run. The peer executes the same config with the
// complementary endpoint option.
int run_single_party(const RunConfig& cfg, const std::string& out_dir) {
    if (!cfg.run.sweep.empty() || cfg.train.seeds != 1)
        throw std::runtime_error(
            "tcp listen/connect mode runs a single point: clear sweep and set seeds = 1");
    const std::uint64_t seed = cfg.train.seed;
    const LoadedData data = load_and_partition(cfg, seed);
    const splitnn::ProtocolConfig proto = build_protocol(cfg, data, cfg.privacy.epsilon, seed);
    std::filesystem::create_directories(out_dir);

    if (!cfg.run.connect.empty()) {
        auto [host, port] = splitnn::parse_endpoint(cfg.run.connect);
        auto channel = splitnn::tcp_connect(host, port);
        RngState guest_rng = RngState(seed).fork(splitnn::kGuestModelStream);
        RngState host_rng = RngState(seed).fork(splitnn::kHostEmbedStream);
        splitnn::SplitModel model =
            splitnn::build_split_model(data.arch, data.guest_train.cols, data.host_train.cols,
                                       data.classes, proto.merge, guest_rng, host_rng);
        auto result =
            splitnn::run_guest_party(*channel, model.guest, data.guest_train, data.guest_test,
                                     proto);
        std::string ledger = privacy::BudgetAccountant::ledger_csv_header();
        ledger += result.ledger_csv;
        data::write_text_file(out_dir + "/ledger.csv", ledger);
        data::write_text_file(out_dir + "/importance.csv", result.importance_csv);
        return result.budget_exhausted ? 2 : 0;
    }

    const auto listen_port = splitnn::parse_endpoint(cfg.run.listen).second;
    splitnn::TcpListener listener(listen_port);
    auto channel = listener.accept_channel();
    RngState guest_rng = RngState(seed).fork(splitnn::kGuestModelStream);
    RngState host_rng = RngState(seed).fork(splitnn::kHostEmbedStream);
    splitnn::SplitModel model =
        splitnn::build_split_model(data.arch, data.guest_train.cols, data.host_train.cols,
                                   data.classes, proto.merge, guest_rng, host_rng);
    auto result = splitnn::run_host_party(*channel, model.host_embed, model.host_tail,
                                          data.host_train, data.train_labels, data.host_test,
                                          data.test_labels, proto);
    std::string metrics = metrics_header();
    metrics += metrics_row(data.name,
                           cfg.privacy.protect == splitnn::Protect::none
                               ? "none"
                               : splitnn::to_string(cfg.privacy.kind),
                           splitnn::to_string(cfg.privacy.protect), cfg.privacy.epsilon, seed,
                           result.metric, "none", 0.0);
    data::write_text_file(out_dir + "/metrics.csv", metrics);
    std::string ledger = privacy::BudgetAccountant::ledger_csv_header();
    ledger += result.ledger_csv;
    data::write_text_file(out_dir + "/ledger.csv", ledger);
    return result.budget_exhausted ? 2 : 0;
}

} // namespace

int run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.run.transport == TransportKind::tcp &&
        (!cfg.run.listen.empty() || !cfg.run.connect.empty()))
        return run_single_party(cfg, out_dir);

    std::filesystem::create_directories(out_dir);
    std::string metrics = metrics_header();
    bool any_exhausted = false;

    const std::string protect_str = splitnn::to_string(cfg.privacy.protect);
    const std::string defense_str = cfg.privacy.protect == splitnn::Protect::none
                                        ? "none"
                                        : splitnn::to_string(cfg.privacy.kind);

    for (double epsilon : sweep_points(cfg)) {
        for (std::uint64_t s = 0; s < cfg.train.seeds; ++s) {
            const std::uint64_t seed = cfg.train.seed + s;
            const LoadedData data = load_and_partition(cfg, seed);
            const splitnn::ProtocolConfig proto = build_protocol(cfg, data, epsilon, seed);
            auto result = train_point(cfg, data, proto);
            any_exhausted |= result.guest.budget_exhausted || result.host.budget_exhausted;

            const std::string suffix = format_point_suffix(epsilon, seed);
            std::string ledger = privacy::BudgetAccountant::ledger_csv_header();
            ledger += result.guest.ledger_csv;
            ledger += result.host.ledger_csv;
            data::write_text_file(out_dir + "/ledger" + suffix + ".csv", ledger);
            data::write_text_file(out_dir + "/importance" + suffix + ".csv",
                                  result.guest.importance_csv);

            double attack_metric = 0.0;
            std::string attack_name = "none";
            if (cfg.attack.kind != AttackKind::none) {
                attack_name = to_string(cfg.attack.kind);
                attack_metric = run_attack_point(cfg, data, proto, out_dir);
            }
            metrics += metrics_row(data.name, defense_str, protect_str, epsilon, seed,
                                   result.host.metric, attack_name, attack_metric);
            // Keep unsuffixed copies pointing at the latest finished point.
            data::write_text_file(out_dir + "/ledger.csv", ledger);
            data::write_text_file(out_dir + "/importance.csv",
                                  result.guest.importance_csv);
            data::write_text_file(out_dir + "/metrics.csv", metrics);
        }
    }
    data::write_text_file(out_dir + "/metrics.csv", metrics);
    return any_exhausted ? 2 : 0;
}

int run_attack_sweep(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.attack.kind == AttackKind::none)
        throw std::runtime_error("attack sweep: [attack] kind is none");
    std::filesystem::create_directories(out_dir);
    std::string csv = "attack,side,epsilon,seed,metric\n";
    for (double epsilon : sweep_points(cfg)) {
        for (std::uint64_t s = 0; s < cfg.train.seeds; ++s) {
            const std::uint64_t seed = cfg.train.seed + s;
            const LoadedData data = load_and_partition(cfg, seed);
            const splitnn::ProtocolConfig proto = build_protocol(cfg, data, epsilon, seed);
            const double metric = run_attack_point(cfg, data, proto, out_dir);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,%s,%.12g,%llu,%.12g\n",
                          to_string(cfg.attack.kind).c_str(),
                          attacks::to_string(cfg.attack.side).c_str(), epsilon,
                          static_cast<unsigned long long>(seed), metric);
            csv += buf;
            data::write_text_file(out_dir + "/attacks.csv", csv);
        }
    }
    data::write_text_file(out_dir + "/attacks.csv", csv);
    return 0;
}

int compare_baselines(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const splitnn::Protect protect = cfg.privacy.protect == splitnn::Protect::none
                                         ? splitnn::Protect::guest
                                         : cfg.privacy.protect;
    struct Arm {
        std::string label;
        splitnn::Protect protect;
        splitnn::Mechanism mechanism;
    };
    const std::vector<Arm> arms = {
        {"none", splitnn::Protect::none, splitnn::Mechanism::r3elu},
        {"r3elu", protect, splitnn::Mechanism::r3elu},
        {"laplace", protect, splitnn::Mechanism::laplace_primitive},
        {"dpsgd", protect, splitnn::Mechanism::dpsgd_minimal},
    };

    std::string csv = metrics_header();
    for (double epsilon : sweep_points(cfg)) {
        for (std::uint64_t s = 0; s < cfg.train.seeds; ++s) {
            const std::uint64_t seed = cfg.train.seed + s;
            const LoadedData data = load_and_partition(cfg, seed);
            for (const auto& arm : arms) {
                RunConfig arm_cfg = cfg;
                arm_cfg.privacy.protect = arm.protect;
                arm_cfg.privacy.kind = arm.mechanism;
                const splitnn::ProtocolConfig proto =
                    build_protocol(arm_cfg, data, epsilon, seed);
                auto result = splitnn::train_split(
                    data.guest_train, data.host_train, data.train_labels, data.guest_test,
                    data.host_test, data.test_labels, data.arch, data.classes, proto);
                double attack_metric = 0.0;
                std::string attack_name = "none";
                if (cfg.attack.kind != AttackKind::none) {
                    attack_name = to_string(cfg.attack.kind);
                    attack_metric = run_attack_point(arm_cfg, data, proto, out_dir);
                }
                csv += metrics_row(data.name, arm.label, splitnn::to_string(arm.protect),
                                   epsilon, seed, result.host.metric, attack_name,
                                   attack_metric);
                data::write_text_file(out_dir + "/comparison.csv", csv);
            }
        }
    }
    data::write_text_file(out_dir + "/comparison.csv", csv);
    return 0;
}

} // namespace r3split::cli
