#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "r3split/data.hpp"
#include "r3split/message.hpp"
#include "r3split/pipeline.hpp"
#include "r3split/splitnn.hpp"

using namespace r3split;
using namespace r3split::splitnn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    RngState rng(seed);
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

} // namespace

TEST_CASE("vertical partition") {
    SUBCASE("the 96/64 split produces views of those widths") {
        const auto spec = PartitionSpec::contiguous(160, 96);
        const Matrix rows = random_matrix(5, 160, 1);
        const auto [guest, host] = vertical_partition(rows, spec);
        CHECK(guest.cols == 96);
        CHECK(host.cols == 64);
        CHECK(guest.rows == 5);
    }
    SUBCASE("padding keeps full width with zeros off-support") {
        const auto spec = PartitionSpec::contiguous(6, 2, /*padding=*/true);
        Matrix rows(2, 6, 1.0);
        const auto [guest, host] = vertical_partition(rows, spec);
        CHECK(guest.cols == 6);
        CHECK(host.cols == 6);
        CHECK(guest(0, 0) == 1.0);
        CHECK(guest(0, 3) == 0.0);
        CHECK(host(0, 0) == 0.0);
        CHECK(host(0, 3) == 1.0);
    }
    SUBCASE("recombining non-padded views restores the original row") {
        PartitionSpec spec;
        spec.guest_indices = {0, 2, 5};
        spec.host_indices = {1, 3, 4};
        const Matrix rows = random_matrix(4, 6, 2);
        const auto [guest, host] = vertical_partition(rows, spec);
        const Matrix back = recombine(guest, host, spec, 6);
        for (std::size_t i = 0; i < rows.data.size(); ++i)
            CHECK(back.data[i] == rows.data[i]);
    }
    SUBCASE("overlapping indices are rejected") {
        PartitionSpec spec;
        spec.guest_indices = {0, 1};
        spec.host_indices = {1, 2};
        CHECK_THROWS_AS(vertical_partition(Matrix(1, 3, 0.0), spec), std::invalid_argument);
    }
    SUBCASE("coverage gaps are rejected when padding is off") {
        PartitionSpec spec;
        spec.guest_indices = {0};
        spec.host_indices = {2};
        CHECK_THROWS_AS(vertical_partition(Matrix(1, 3, 0.0), spec), std::invalid_argument);
    }
}

TEST_CASE("merge strategies") {
    Matrix a(1, 2), b(1, 2);
    a(0, 0) = 1;
    a(0, 1) = 3;
    b(0, 0) = 3;
    b(0, 1) = 5;
    MergeCache cache;

    SUBCASE("avg") {
        const Matrix out = merge_forward(a, b, MergeStrategy::avg, cache);
        CHECK(out(0, 0) == 2.0);
        CHECK(out(0, 1) == 4.0);
    }
    SUBCASE("min") {
        b(0, 1) = 1;
        const Matrix out = merge_forward(a, b, MergeStrategy::min, cache);
        CHECK(out(0, 0) == 1.0);
        CHECK(out(0, 1) == 1.0);
    }
    SUBCASE("concat appends") {
        const Matrix out = merge_forward(a, b, MergeStrategy::concat, cache);
        CHECK(out.cols == 4);
        CHECK(out(0, 2) == 3.0);
    }
    SUBCASE("element-wise width mismatch is rejected") {
        Matrix c(1, 3, 0.0);
        CHECK_THROWS_AS(merge_forward(a, c, MergeStrategy::sum, cache), std::invalid_argument);
    }

    SUBCASE("backward matches finite differences for every strategy") {
        RngState rng(3);
        for (MergeStrategy strategy :
             {MergeStrategy::concat, MergeStrategy::max, MergeStrategy::sum,
              MergeStrategy::avg, MergeStrategy::mul, MergeStrategy::min}) {
            Matrix ga_in = random_matrix(3, 4, 100 + int(strategy));
            Matrix gb_in = random_matrix(3, 4, 200 + int(strategy));
            MergeCache mc;
            const Matrix out = merge_forward(ga_in, gb_in, strategy, mc);
            Matrix up = random_matrix(out.rows, out.cols, 300 + int(strategy));

            auto objective = [&](const Matrix& x, const Matrix& y) {
                MergeCache tmp;
                const Matrix o = merge_forward(x, y, strategy, tmp);
                double s = 0.0;
                for (std::size_t i = 0; i < o.data.size(); ++i) s += o.data[i] * up.data[i];
                return s;
            };
            const auto [ga, gb] = merge_backward(up, strategy, mc);
            const double h = 1e-6;
            for (std::size_t i = 0; i < ga_in.data.size(); ++i) {
                Matrix xp = ga_in, xm = ga_in;
                xp.data[i] += h;
                xm.data[i] -= h;
                const double fd = (objective(xp, gb_in) - objective(xm, gb_in)) / (2 * h);
                CHECK(ga.data[i] == doctest::Approx(fd).epsilon(1e-4));
                Matrix yp = gb_in, ym = gb_in;
                yp.data[i] += h;
                ym.data[i] -= h;
                const double fdb = (objective(ga_in, yp) - objective(ga_in, ym)) / (2 * h);
                CHECK(gb.data[i] == doctest::Approx(fdb).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("wire codec") {
    SUBCASE("round trip preserves every field at 32-bit payload precision") {
        RngState rng(4);
        for (int trial = 0; trial < 200; ++trial) {
            TunnelMessage msg;
            msg.direction = trial % 2 ? Direction::backward : Direction::forward;
            msg.iteration = rng.u64();
            msg.payload.resize(rng.u64() % 40);
            for (auto& v : msg.payload) v = static_cast<float>(rng.normal());
            const auto frame = decode_message(encode_message(msg));
            CHECK(frame.direction == msg.direction);
            CHECK(frame.iteration == msg.iteration);
            CHECK(frame.payload == msg.payload);
        }
    }
    SUBCASE("an empty payload encodes to exactly 18 bytes") {
        CHECK(encode_message(TunnelMessage{}).size() == 18);
    }
    SUBCASE("corruption classes map to distinct codes") {
        auto frame = encode_message(TunnelMessage{Direction::forward, 7, {1.0f, 2.0f}});

        auto code_of = [](std::span<const std::uint8_t> f) {
            try {
                decode_message(f);
            } catch (const CodecError& e) {
                return e.code();
            }
            return CodecError::Code::non_finite; // sentinel: no error raised
        };

        // Truncations at every prefix length never crash.
        for (std::size_t cut = 0; cut < frame.size(); ++cut)
            CHECK(code_of(std::span(frame.data(), cut)) == CodecError::Code::truncated);

        auto bad_version = frame;
        bad_version[4] = 9;
        CHECK(code_of(bad_version) == CodecError::Code::bad_version);

        auto bad_direction = frame;
        bad_direction[5] = 2;
        CHECK(code_of(bad_direction) == CodecError::Code::bad_direction);

        auto trailing = frame;
        trailing.push_back(0);
        CHECK(code_of(trailing) == CodecError::Code::length_mismatch);

        auto bad_count = frame;
        bad_count[14] = 5; // element count no longer matches the length
        CHECK(code_of(bad_count) == CodecError::Code::length_mismatch);

        // A corrupted length field reads as truncation, never a crash.
        auto huge_len = frame;
        huge_len[0] = 0xff;
        huge_len[1] = 0xff;
        CHECK(code_of(huge_len) == CodecError::Code::truncated);
    }
    SUBCASE("non-finite payloads are rejected at encode time") {
        TunnelMessage msg;
        msg.payload = {std::numeric_limits<float>::infinity()};
        CHECK_THROWS_AS(encode_message(msg), CodecError);
    }
}

namespace {

// Straight-line composite of the split computation, including the f32 wire
// quantization at the cut, against which the two-party pipeline is checked.
struct MonolithicReference {
    nn::SequentialModel guest, embed, tail;
    nn::OptimizerState opt_guest, opt_embed, opt_tail;
    ProtocolConfig cfg;

    static Matrix quantize(const Matrix& m) {
        Matrix out = m;
        for (auto& v : out.data) v = static_cast<double>(static_cast<float>(v));
        return out;
    }

    double step(const Matrix& xg, const Matrix& xh, const std::vector<int>& labels) {
        const Matrix v = guest.forward(xg, true);
        Matrix a = v;
        for (auto& x : a.data) x = std::max(0.0, x);
        const Matrix a_q = quantize(a);
        const Matrix ah = embed.forward(xh, true);
        MergeCache cache;
        const Matrix merged = merge_forward(a_q, ah, cfg.merge, cache);
        const Matrix logits = tail.forward(merged, true);
        auto [loss, grad] = nn::softmax_cross_entropy(logits, labels);
        guest.zero_grads();
        embed.zero_grads();
        tail.zero_grads();
        const Matrix merged_grad = tail.backward(grad);
        auto [gg, gh] = merge_backward(merged_grad, cfg.merge, cache);
        embed.backward(gh);
        Matrix gated = quantize(gg);
        for (std::size_t i = 0; i < gated.data.size(); ++i)
            if (v.data[i] <= 0.0) gated.data[i] = 0.0;
        guest.backward(gated);
        nn::optimizer_step(opt_embed, embed);
        nn::optimizer_step(opt_tail, tail);
        nn::optimizer_step(opt_guest, guest);
        return loss;
    }
};

MonolithicReference make_reference(const ProtocolConfig& cfg, std::size_t guest_in,
                                   std::size_t host_in, std::size_t classes,
                                   ModelArch arch) {
    RngState guest_rng = RngState(cfg.seed).fork(kGuestModelStream);
    RngState host_rng = RngState(cfg.seed).fork(kHostEmbedStream);
    SplitModel sm =
        build_split_model(arch, guest_in, host_in, classes, cfg.merge, guest_rng, host_rng);
    MonolithicReference ref{std::move(sm.guest),
                            std::move(sm.host_embed),
                            std::move(sm.host_tail),
                            {cfg.optimizer, cfg.learning_rate},
                            {cfg.optimizer, cfg.learning_rate},
                            {cfg.optimizer, cfg.learning_rate},
                            cfg};
    return ref;
}

double max_param_diff(nn::SequentialModel& a, nn::SequentialModel& b) {
    auto sa = a.param_slices();
    auto sb = b.param_slices();
    double worst = 0.0;
    for (std::size_t s = 0; s < sa.size(); ++s)
        for (std::size_t i = 0; i < sa[s].size; ++i)
            worst = std::max(worst, std::abs(sa[s].value[i] - sb[s].value[i]));
    return worst;
}

struct ToySplitData {
    Matrix guest_train, host_train, guest_test, host_test;
    std::vector<int> train_labels, test_labels;
};

ToySplitData make_split_data(std::size_t train_rows, std::size_t test_rows, std::size_t gw,
                             std::size_t hw, std::size_t classes, std::uint64_t seed) {
    RngState rng(seed);
    ToySplitData d;
    d.guest_train = Matrix(train_rows, gw);
    d.host_train = Matrix(train_rows, hw);
    d.guest_test = Matrix(test_rows, gw);
    d.host_test = Matrix(test_rows, hw);
    for (auto& v : d.guest_train.data) v = rng.uniform();
    for (auto& v : d.host_train.data) v = rng.uniform();
    for (auto& v : d.guest_test.data) v = rng.uniform();
    for (auto& v : d.host_test.data) v = rng.uniform();
    d.train_labels.resize(train_rows);
    for (auto& l : d.train_labels) l = static_cast<int>(rng.u64() % classes);
    d.test_labels.resize(test_rows);
    for (auto& l : d.test_labels) l = static_cast<int>(rng.u64() % classes);
    return d;
}

} // namespace

TEST_CASE("privacy-off split equals the monolithic reference") {
    const std::size_t gw = 12, hw = 10, classes = 4;
    ToySplitData d = make_split_data(64, 8, gw, hw, classes, 5);

    ProtocolConfig cfg;
    cfg.train_rows = 64;
    cfg.test_rows = 8;
    cfg.batch_size = 16;
    cfg.epochs = 3;
    cfg.seed = 99;
    cfg.merge = MergeStrategy::avg;
    cfg.task = TaskKind::classification;
    cfg.optimizer = nn::OptimizerKind::adam;
    cfg.learning_rate = 0.01;

    SUBCASE("single-step gradients agree at every parameter (sgd, lr 1)") {
        ProtocolConfig one = cfg;
        one.batch_size = 64;
        one.epochs = 1;
        one.optimizer = nn::OptimizerKind::sgd;
        one.learning_rate = 1.0;
        one.eval_phase = false;
        one.test_rows = 0;

        RngState gr = RngState(one.seed).fork(kGuestModelStream);
        RngState hr = RngState(one.seed).fork(kHostEmbedStream);
        SplitModel before = build_split_model(ModelArch::recsys, gw, hw, classes, one.merge,
                                              gr, hr);

        auto result =
            splitnn::train_split(d.guest_train, d.host_train, d.train_labels, d.guest_test,
                                 d.host_test, d.test_labels, ModelArch::recsys, classes, one);

        MonolithicReference ref = make_reference(one, gw, hw, classes, ModelArch::recsys);
        const auto order = epoch_order(one.seed, 1, 64);
        Matrix xg(64, gw), xh(64, hw);
        std::vector<int> yb(64);
        for (std::size_t m = 0; m < 64; ++m) {
            yb[m] = d.train_labels[order[m]];
            for (std::size_t j = 0; j < gw; ++j) xg(m, j) = d.guest_train(order[m], j);
            for (std::size_t j = 0; j < hw; ++j) xh(m, j) = d.host_train(order[m], j);
        }
        ref.step(xg, xh, yb);

        // With sgd at lr 1 the parameter delta is exactly the gradient.
        CHECK(max_param_diff(result.model.guest, ref.guest) < 1e-10);
        CHECK(max_param_diff(result.model.host_embed, ref.embed) < 1e-10);
        CHECK(max_param_diff(result.model.host_tail, ref.tail) < 1e-10);
        // And the gradients were not all zero: parameters moved.
        CHECK(max_param_diff(result.model.guest, before.guest) > 1e-6);
    }

    SUBCASE("multi-epoch adam trajectory matches, batch-norm arch included") {
        ProtocolConfig multi = cfg;
        multi.eval_phase = false;
        multi.test_rows = 0;
        auto result = splitnn::train_split(d.guest_train, d.host_train, d.train_labels,
                                           d.guest_test, d.host_test, d.test_labels,
                                           ModelArch::mnist_mlp, classes, multi);

        MonolithicReference ref = make_reference(multi, gw, hw, classes, ModelArch::mnist_mlp);
        std::vector<double> ref_losses;
        for (std::size_t epoch = 1; epoch <= multi.epochs; ++epoch) {
            const auto order = epoch_order(multi.seed, epoch, 64);
            for (std::size_t b = 0; b < 64 / multi.batch_size; ++b) {
                Matrix xg(multi.batch_size, gw), xh(multi.batch_size, hw);
                std::vector<int> yb(multi.batch_size);
                for (std::size_t m = 0; m < multi.batch_size; ++m) {
                    const std::size_t r = order[b * multi.batch_size + m];
                    yb[m] = d.train_labels[r];
                    for (std::size_t j = 0; j < gw; ++j) xg(m, j) = d.guest_train(r, j);
                    for (std::size_t j = 0; j < hw; ++j) xh(m, j) = d.host_train(r, j);
                }
                ref_losses.push_back(ref.step(xg, xh, yb));
            }
        }
        CHECK(max_param_diff(result.model.guest, ref.guest) < 1e-10);
        CHECK(max_param_diff(result.model.host_embed, ref.embed) < 1e-10);
        CHECK(max_param_diff(result.model.host_tail, ref.tail) < 1e-10);
        REQUIRE(result.host.losses.size() == ref_losses.size());
        for (std::size_t i = 0; i < ref_losses.size(); ++i)
            CHECK(result.host.losses[i] == doctest::Approx(ref_losses[i]).epsilon(1e-12));
    }
}

TEST_CASE("train step with the tunnel on") {
    const std::size_t gw = 12, hw = 10, classes = 3;
    ToySplitData d = make_split_data(64, 16, gw, hw, classes, 6);

    ProtocolConfig cfg;
    cfg.train_rows = 64;
    cfg.test_rows = 16;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.seed = 7;
    cfg.defense.protect = Protect::both;
    cfg.defense.epsilon = 2.0;
    cfg.defense.k = 4;
    cfg.defense.clip_c = 1.0;
    cfg.defense.allocation = Allocation::dynamic_importance;

    SUBCASE("defended training runs, charges both accountants, stays finite") {
        auto result =
            splitnn::train_split(d.guest_train, d.host_train, d.train_labels, d.guest_test,
                                 d.host_test, d.test_labels, ModelArch::recsys, classes, cfg);
        CHECK(result.guest.iterations == 8);
        CHECK(result.host.iterations == 8);
        CHECK(result.guest.ledger_csv.find("guest") != std::string::npos);
        CHECK(result.host.ledger_csv.find("host") != std::string::npos);
        CHECK(result.guest.strong_composition_eps > 0.0);
        for (double l : result.host.losses) CHECK(std::isfinite(l));
        CHECK(result.guest.importance_csv.find("epoch,neuron,importance") == 0);
    }

    SUBCASE("budget cap halts training in lockstep with a ledger") {
        ProtocolConfig capped = cfg;
        capped.defense.protect = Protect::guest;
        // gamma = 16/64 = 0.25, so each step spends 0.5; cap 1.6 allows 3.
        capped.defense.budget_cap = 1.6;
        auto result = splitnn::train_split(d.guest_train, d.host_train, d.train_labels,
                                           d.guest_test, d.host_test, d.test_labels,
                                           ModelArch::recsys, classes, capped);
        CHECK(result.guest.budget_exhausted);
        CHECK(result.guest.iterations == 3);
        CHECK(result.host.iterations == 3);
        CHECK(!result.guest.ledger_csv.empty());
    }

    SUBCASE("host-side gradients are untouched by the forward defense") {
        // With protect=guest and a fixed forward noise realization, the
        // host's update is the plain backprop update: run the host pipeline
        // against a reference that consumes the same smashed rows.
        ProtocolConfig fwd = cfg;
        fwd.defense.protect = Protect::guest;
        fwd.epochs = 1;
        fwd.eval_phase = false;
        fwd.test_rows = 0;

        std::vector<Matrix> captured;
        HostHooks hooks;
        Matrix batch_rows(fwd.batch_size, 0);
        std::vector<std::vector<double>> smashed_rows;
        hooks.on_smashed = [&](std::size_t, std::size_t, const std::vector<double>& row) {
            smashed_rows.push_back(row);
        };
        auto result = splitnn::train_split(d.guest_train, d.host_train, d.train_labels,
                                           d.guest_test, d.host_test, d.test_labels,
                                           ModelArch::recsys, classes, fwd, nullptr, nullptr,
                                           nullptr, &hooks);

        MonolithicReference ref = make_reference(fwd, gw, hw, classes, ModelArch::recsys);
        for (std::size_t epoch = 1; epoch <= 1; ++epoch) {
            const auto order = epoch_order(fwd.seed, epoch, 64);
            for (std::size_t b = 0; b < 4; ++b) {
                Matrix smashed(fwd.batch_size, ref.embed.output_dim());
                for (std::size_t m = 0; m < fwd.batch_size; ++m)
                    for (std::size_t j = 0; j < smashed.cols; ++j)
                        smashed(m, j) = smashed_rows[b * fwd.batch_size + m][j];
                Matrix xh(fwd.batch_size, hw);
                std::vector<int> yb(fwd.batch_size);
                for (std::size_t m = 0; m < fwd.batch_size; ++m) {
                    const std::size_t r = order[b * fwd.batch_size + m];
                    yb[m] = d.train_labels[r];
                    for (std::size_t j = 0; j < hw; ++j) xh(m, j) = d.host_train(r, j);
                }
                const Matrix ah = ref.embed.forward(xh, true);
                MergeCache cache;
                const Matrix merged = merge_forward(smashed, ah, fwd.merge, cache);
                const Matrix logits = ref.tail.forward(merged, true);
                auto [loss, grad] = nn::softmax_cross_entropy(logits, yb);
                (void)loss;
                ref.embed.zero_grads();
                ref.tail.zero_grads();
                const Matrix merged_grad = ref.tail.backward(grad);
                auto [gg, gh] = merge_backward(merged_grad, fwd.merge, cache);
                (void)gg;
                ref.embed.backward(gh);
                nn::optimizer_step(ref.opt_embed, ref.embed);
                nn::optimizer_step(ref.opt_tail, ref.tail);
            }
        }
        CHECK(max_param_diff(result.model.host_embed, ref.embed) < 1e-10);
        CHECK(max_param_diff(result.model.host_tail, ref.tail) < 1e-10);
    }
}

TEST_CASE("evaluation metrics") {
    SUBCASE("perfect predictor scores 1.0 on both tasks") {
        Matrix logits(6, 5, 0.0);
        std::vector<int> labels{0, 1, 2, 3, 4, 0};
        for (std::size_t r = 0; r < 6; ++r) logits(r, labels[r]) = 10.0;
        CHECK(evaluate_logits(logits, labels, TaskKind::classification, 10) == 1.0);
        CHECK(evaluate_logits(logits, labels, TaskKind::recommendation, 2) == 1.0);
    }
    SUBCASE("single-class test set with a matching constant predictor") {
        Matrix logits(4, 3, 0.0);
        for (std::size_t r = 0; r < 4; ++r) logits(r, 1) = 1.0;
        const std::vector<int> labels(4, 1);
        CHECK(evaluate_logits(logits, labels, TaskKind::classification, 10) == 1.0);
    }
    SUBCASE("empty test set is rejected") {
        CHECK_THROWS_AS(evaluate_logits(Matrix(0, 3), {}, TaskKind::classification, 10),
                        std::invalid_argument);
    }
}

TEST_CASE("merge strategy benchmark stays within a five-point spread") {
    data::RecsysSpec spec;
    spec.users = 260;
    spec.items = 40;
    spec.embedding_dim = 160;
    spec.interactions_per_user = 4;
    spec.property_correlation = 0.0;
    RngState rng(21);
    const auto all = data::synth_recsys(spec, rng);

    // Per-user holdout of the final interaction.
    std::vector<std::size_t> train_ids, test_ids;
    for (std::size_t r = 0; r < all.rows(); ++r)
        ((r % spec.interactions_per_user) == spec.interactions_per_user - 1 ? test_ids
                                                                            : train_ids)
            .push_back(r);
    const auto spec96 = PartitionSpec::contiguous(160, 96);
    auto gather = [&](const std::vector<std::size_t>& ids) {
        Matrix out(ids.size(), 160);
        std::vector<int> labels(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            labels[i] = all.labels[ids[i]];
            for (std::size_t j = 0; j < 160; ++j) out(i, j) = all.features(ids[i], j);
        }
        return std::make_pair(out, labels);
    };
    const auto [train_x, train_y] = gather(train_ids);
    const auto [test_x, test_y] = gather(test_ids);
    const auto [gtr, htr] = vertical_partition(train_x, spec96);
    const auto [gte, hte] = vertical_partition(test_x, spec96);

    std::vector<double> ratios;
    for (MergeStrategy strategy : {MergeStrategy::concat, MergeStrategy::max,
                                   MergeStrategy::sum, MergeStrategy::avg, MergeStrategy::mul,
                                   MergeStrategy::min}) {
        ProtocolConfig cfg;
        cfg.train_rows = gtr.rows;
        cfg.test_rows = gte.rows;
        cfg.batch_size = 32;
        cfg.epochs = 12;
        cfg.seed = 33;
        cfg.merge = strategy;
        cfg.task = TaskKind::recommendation;
        cfg.hit_k = 10;
        auto result = splitnn::train_split(gtr, htr, train_y, gte, hte, test_y,
                                           ModelArch::recsys, spec.items, cfg);
        ratios.push_back(result.host.metric);
    }
    double lo = ratios[0], hi = ratios[0];
    for (double r : ratios) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    // All strategies learn well past the 25% chance level and land close
    // together.
    CHECK(lo > 0.35);
    CHECK(hi - lo <= 0.05);
}

// The tunnel is the only cross-party surface: the party loop signatures
// admit no access to the peer's model or features.
static_assert(std::is_invocable_v<decltype(run_guest_party), Channel&, nn::SequentialModel&,
                                  const Matrix&, const Matrix&, const ProtocolConfig&,
                                  const GuestHooks*>);
static_assert(!std::is_invocable_v<decltype(run_guest_party), Channel&, SplitModel&,
                                   const Matrix&, const Matrix&, const ProtocolConfig&,
                                   const GuestHooks*>);
