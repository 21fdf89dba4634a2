#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "r3split/attacks.hpp"
#include "r3split/data.hpp"
#include "r3split/splitnn.hpp"

using namespace r3split;
using namespace r3split::attacks;
using r3split::splitnn::Allocation;
using r3split::splitnn::ModelArch;
using r3split::splitnn::Protect;
using r3split::splitnn::ProtocolConfig;

namespace {

struct VictimSetup {
    Matrix guest_train, host_train;
    std::vector<int> labels;
    std::vector<int> property;
    std::size_t classes;
};

VictimSetup make_synth_victim(double correlation, std::uint64_t seed,
                              std::size_t interactions = 2) {
    data::RecsysSpec spec;
    spec.users = interactions == 1 ? 520 : 260;
    spec.items = 12;
    spec.embedding_dim = 64;
    spec.interactions_per_user = interactions;
    spec.property_correlation = correlation;
    spec.property_block_begin = 0;
    spec.property_block_width = 16; // inside the guest's 40-wide view
    RngState rng(seed);
    const auto ds = data::synth_recsys(spec, rng);
    const auto part = splitnn::PartitionSpec::contiguous(64, 40);
    auto [guest, host] = splitnn::vertical_partition(ds.features, part);
    return {std::move(guest), std::move(host), ds.labels, ds.property, spec.items};
}

ProtocolConfig victim_protocol(const VictimSetup& v, std::uint64_t seed, double epsilon,
                               bool defended) {
    ProtocolConfig cfg;
    cfg.train_rows = v.guest_train.rows;
    cfg.test_rows = 0;
    cfg.batch_size = 32;
    cfg.epochs = 2;
    cfg.seed = seed;
    cfg.task = splitnn::TaskKind::recommendation;
    cfg.eval_phase = false;
    if (defended) {
        cfg.defense.protect = Protect::guest;
        cfg.defense.epsilon = epsilon;
        cfg.defense.k = 4;
        cfg.defense.clip_c = 1.0;
        cfg.defense.allocation = Allocation::dynamic_importance;
    }
    return cfg;
}

} // namespace

TEST_CASE("a generator emitting the dataset mean scores the mean per-feature variance") {
    RngState rng(1);
    Matrix targets(400, 6);
    for (auto& v : targets.data) v = rng.uniform();
    std::vector<double> mean(6, 0.0);
    for (std::size_t r = 0; r < targets.rows; ++r)
        for (std::size_t j = 0; j < 6; ++j) mean[j] += targets(r, j);
    for (auto& m : mean) m /= 400.0;
    Matrix mean_pred(400, 6);
    for (std::size_t r = 0; r < targets.rows; ++r)
        for (std::size_t j = 0; j < 6; ++j) mean_pred(r, j) = mean[j];

    double variance = 0.0;
    for (std::size_t r = 0; r < targets.rows; ++r)
        for (std::size_t j = 0; j < 6; ++j) {
            const double d = targets(r, j) - mean[j];
            variance += d * d;
        }
    variance /= 400.0 * 6.0;
    CHECK(mean_squared_error(mean_pred, targets) == doctest::Approx(variance).epsilon(1e-12));
}

TEST_CASE("logistic loss gradient matches finite differences") {
    RngState rng(2);
    Matrix logits(8, 1);
    for (auto& v : logits.data) v = rng.normal();
    std::vector<double> targets(8);
    for (auto& t : targets) t = rng.u64() % 2 ? 1.0 : 0.0;
    Matrix grad;
    logistic_loss(logits, targets, grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 8; ++i) {
        Matrix up = logits, down = logits;
        up.data[i] += h;
        down.data[i] -= h;
        Matrix tmp;
        const double fd = (logistic_loss(up, targets, tmp) - logistic_loss(down, targets, tmp)) /
                          (2.0 * h);
        CHECK(grad.data[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("property inference attack") {
    SUBCASE("fewer than two property classes is rejected") {
        VictimSetup v = make_synth_victim(1.0, 3);
        std::fill(v.property.begin(), v.property.end(), 0);
        PropertyInferenceConfig atk;
        CHECK_THROWS_AS(run_property_inference(v.guest_train, v.host_train, v.labels,
                                               v.property, ModelArch::recsys, v.classes,
                                               victim_protocol(v, 11, 0, false), atk),
                        std::invalid_argument);
    }

    SUBCASE("independent property pins the attack at chance level") {
        // One interaction per user: no row of a shadow user leaks into the
        // holdout.
        VictimSetup v = make_synth_victim(0.0, 4, /*interactions=*/1);
        PropertyInferenceConfig atk;
        atk.iterations = 800;
        atk.seed = 42;
        const auto r =
            run_property_inference(v.guest_train, v.host_train, v.labels, v.property,
                                   ModelArch::recsys, v.classes,
                                   victim_protocol(v, 12, 0, false), atk);
        CHECK(r.property_classes == 2);
        CHECK(std::abs(r.attack_accuracy - 0.5) <= 0.06);
    }

    SUBCASE("a linearly encoded property is recovered from the clean tunnel") {
        VictimSetup v = make_synth_victim(1.0, 5);
        PropertyInferenceConfig atk;
        atk.iterations = 800;
        atk.seed = 43;
        const auto undefended =
            run_property_inference(v.guest_train, v.host_train, v.labels, v.property,
                                   ModelArch::recsys, v.classes,
                                   victim_protocol(v, 13, 0, false), atk);
        CHECK(undefended.attack_accuracy >= 0.80);

        const auto defended =
            run_property_inference(v.guest_train, v.host_train, v.labels, v.property,
                                   ModelArch::recsys, v.classes,
                                   victim_protocol(v, 13, 0.5, true), atk);
        CHECK(defended.attack_accuracy <= undefended.attack_accuracy - 0.05);
    }
}

TEST_CASE("gan reconstruction attack") {
    SUBCASE("undefended channel beats the mean baseline") {
        VictimSetup v = make_synth_victim(0.0, 6);
        ReconstructionConfig atk;
        atk.iterations = 1200;
        atk.seed = 44;
        const auto r = run_reconstruction(v.guest_train, v.host_train, v.labels,
                                          ModelArch::recsys, v.classes,
                                          victim_protocol(v, 14, 0, false), atk);
        CHECK(r.mse < r.mean_baseline_mse);
    }

    SUBCASE("a tight budget hurts the attacker at least as much as a loose one") {
        VictimSetup v = make_synth_victim(0.0, 7);
        ReconstructionConfig atk;
        atk.iterations = 1000;
        atk.seed = 45;
        const auto tight = run_reconstruction(v.guest_train, v.host_train, v.labels,
                                              ModelArch::recsys, v.classes,
                                              victim_protocol(v, 15, 0.1, true), atk);
        const auto loose = run_reconstruction(v.guest_train, v.host_train, v.labels,
                                              ModelArch::recsys, v.classes,
                                              victim_protocol(v, 15, 4.0, true), atk);
        CHECK(tight.mse >= loose.mse);
    }

    SUBCASE("guest-side attacker consumes the partial-loss channel") {
        VictimSetup v = make_synth_victim(0.0, 8);
        ReconstructionConfig atk;
        atk.side = AttackerSide::guest;
        atk.iterations = 400;
        atk.seed = 46;
        const auto r = run_reconstruction(v.guest_train, v.host_train, v.labels,
                                          ModelArch::recsys, v.classes,
                                          victim_protocol(v, 16, 0, false), atk);
        CHECK(r.mse > 0.0);
        CHECK(r.holdout_rows > 0);
    }
}

TEST_CASE("feature-space hijacking attack") {
    VictimSetup v = make_synth_victim(0.0, 9);
    const std::size_t half = v.guest_train.rows / 2;
    Matrix victim(half, v.guest_train.cols), shadow(half, v.guest_train.cols);
    for (std::size_t r = 0; r < half; ++r)
        for (std::size_t j = 0; j < v.guest_train.cols; ++j) {
            victim(r, j) = v.guest_train(r, j);
            shadow(r, j) = v.guest_train(half + r, j);
        }

    ProtocolConfig cfg = victim_protocol(v, 17, 0, false);
    cfg.train_rows = half;
    cfg.epochs = 120; // the attack budget: epochs * (rows/batch) iterations

    SUBCASE("a missing shadow dataset is rejected") {
        FshaConfig atk;
        CHECK_THROWS_AS(run_fsha(victim, Matrix(0, victim.cols), cfg, ModelArch::recsys, atk),
                        std::invalid_argument);
    }
    SUBCASE("attack batch must match the victim batch") {
        FshaConfig atk;
        atk.batch = 16;
        CHECK_THROWS_AS(run_fsha(victim, shadow, cfg, ModelArch::recsys, atk),
                        std::invalid_argument);
    }
    SUBCASE("the hijack inverts an undefended guest well below the mean baseline") {
        FshaConfig atk;
        atk.seed = 47;
        const auto r = run_fsha(victim, shadow, cfg, ModelArch::recsys, atk);
        CHECK(r.victim_iterations == cfg.planned_iterations());
        CHECK(r.mse < 0.5 * r.mean_baseline_mse);
    }
    SUBCASE("a defended guest resists the hijack") {
        ProtocolConfig defended = cfg;
        defended.defense.protect = Protect::guest;
        defended.defense.epsilon = 0.1;
        defended.defense.k = 4;
        defended.defense.clip_c = 1.0;
        FshaConfig atk;
        atk.seed = 47;
        const auto open = run_fsha(victim, shadow, cfg, ModelArch::recsys, atk);
        const auto sealed = run_fsha(victim, shadow, defended, ModelArch::recsys, atk);
        CHECK(sealed.mse > 3.0 * open.mse);
    }
}

TEST_CASE("attacks on a pure-noise victim report chance level") {
    RngState rng(10);
    const std::size_t rows = 480, gw = 40, hw = 24, classes = 6;
    Matrix guest(rows, gw), host(rows, hw);
    for (auto& x : guest.data) x = rng.uniform();
    for (auto& x : host.data) x = rng.uniform();
    std::vector<int> labels(rows), property(rows);
    for (auto& l : labels) l = static_cast<int>(rng.u64() % classes);
    for (auto& p : property) p = static_cast<int>(rng.u64() % 2);

    ProtocolConfig cfg;
    cfg.train_rows = rows;
    cfg.batch_size = 32;
    cfg.epochs = 2;
    cfg.seed = 18;
    cfg.eval_phase = false;

    PropertyInferenceConfig pia;
    pia.iterations = 600;
    pia.seed = 48;
    const auto inf = run_property_inference(guest, host, labels, property, ModelArch::recsys,
                                            classes, cfg, pia);
    CHECK(std::abs(inf.attack_accuracy - 0.5) <= 0.06);

    ReconstructionConfig rec;
    rec.iterations = 600;
    rec.seed = 49;
    const auto r = run_reconstruction(guest, host, labels, ModelArch::recsys, classes, cfg, rec);
    // Nothing to extract: the attacker cannot do meaningfully better than
    // the mean predictor.
    CHECK(r.mse >= 0.9 * r.mean_baseline_mse);
}
