#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "r3split/importance.hpp"
#include "r3split/message.hpp"
#include "r3split/nn.hpp"
#include "r3split/privacy.hpp"
#include "r3split/splitnn.hpp"
#include "r3split/transport.hpp"

namespace r3split::splitnn {

enum class TaskKind { classification, recommendation };
enum class Allocation { uniform, dynamic_importance };
enum class Protect { none, guest, host, both };

// r3elu is the tunnel; the other two are minimal comparison baselines
// (elementwise Laplace on the raw channel, and per-party gradient
// clipping + Gaussian noise with a clean channel).
enum class Mechanism { r3elu, laplace_primitive, dpsgd_minimal };

Mechanism mechanism_from_string(const std::string& s);
std::string to_string(Mechanism m);

TaskKind task_from_string(const std::string& s);
std::string to_string(TaskKind t);
Allocation allocation_from_string(const std::string& s);
std::string to_string(Allocation a);
Protect protect_from_string(const std::string& s);
std::string to_string(Protect p);

struct DefenseConfig {
    Protect protect = Protect::none;
    Mechanism mechanism = Mechanism::r3elu;
    double epsilon = 1.0; // per-step total budget (eps_p + eps_l) under the fixed schedule
    double p_ratio = 0.5;
    std::size_t k = 1;
    double clip_c = 1.0;
    privacy::ResponseDraw draw = privacy::ResponseDraw::uniform;
    bool backward_noise_all = true;
    Allocation allocation = Allocation::uniform;
    privacy::Schedule schedule = privacy::Schedule::fixed_step;
    double budget_cap = std::numeric_limits<double>::infinity(); // fixed schedule only
    double delta = 1e-5;

    bool forward_on() const { return protect == Protect::guest || protect == Protect::both; }
    bool backward_on() const { return protect == Protect::host || protect == Protect::both; }

    // Mechanism parameters for one direction at a given step budget.
    privacy::PrivacyParams params(std::size_t cut_width, double step_epsilon) const;
};

// Everything both parties must agree on. Keeping one struct shared by both
// loops makes the lockstep protocol deterministic by construction.
struct ProtocolConfig {
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 1;
    MergeStrategy merge = MergeStrategy::avg;
    TaskKind task = TaskKind::classification;
    std::size_t hit_k = 10;
    DefenseConfig defense;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    double learning_rate = 0.01;
    bool eval_phase = true;

    std::size_t iters_per_epoch() const { return train_rows / batch_size; }
    std::size_t planned_iterations() const { return epochs * iters_per_epoch(); }
    double gamma() const {
        return static_cast<double>(batch_size) / static_cast<double>(train_rows);
    }
    void validate() const;
};

// Deterministic sub-stream tags, shared with the test oracles.
inline constexpr std::uint64_t kGuestModelStream = 1;
inline constexpr std::uint64_t kHostEmbedStream = 2;
inline constexpr std::uint64_t kHostTailStream = 3;
inline constexpr std::uint64_t kShuffleStream = 4;
inline constexpr std::uint64_t kGuestTunnelStream = 5;
inline constexpr std::uint64_t kHostTunnelStream = 6;

// Row visit order for one epoch; identical on both parties.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t rows);

// Iterations actually allowed by the budget (<= planned). Both parties
// compute this locally from the shared config, so they halt in lockstep.
std::size_t max_feasible_iterations(const ProtocolConfig& cfg);

enum class ModelArch { recsys, mnist_mlp };

ModelArch arch_from_string(const std::string& s);
std::string to_string(ModelArch a);

struct SplitModel {
    nn::SequentialModel guest;
    nn::SequentialModel host_embed;
    nn::SequentialModel host_tail;
    MergeStrategy merge = MergeStrategy::avg;
    std::size_t cut_width = 0;
};

// Sub-networks around the cut. The cut activation itself (ReLU, or the
// privacy tunnel when the defense is on) is applied by the protocol, not by
// the guest sub-model.
SplitModel build_split_model(ModelArch arch, std::size_t guest_in, std::size_t host_in,
                             std::size_t classes, MergeStrategy merge, RngState& guest_rng,
                             RngState& host_rng);

struct GuestHooks {
    // Fires for every received partial-loss row during training.
    std::function<void(std::size_t iteration, std::size_t row_id,
                       const std::vector<double>& delta)>
        on_partial_loss;
};

struct HostHooks {
    // Fires for every received smashed row during training.
    std::function<void(std::size_t iteration, std::size_t row_id,
                       const std::vector<double>& smashed)>
        on_smashed;
};

struct GuestRunResult {
    std::size_t iterations = 0;
    bool budget_exhausted = false;
    double strong_composition_eps = 0.0;
    std::string ledger_csv;     // rows only, no header
    std::string importance_csv; // epoch,neuron,importance
};

struct HostRunResult {
    std::size_t iterations = 0;
    bool budget_exhausted = false;
    double strong_composition_eps = 0.0;
    std::string ledger_csv;
    std::vector<double> losses; // one per iteration
    double metric = 0.0;        // accuracy or hit@k from the eval phase
};

// Blocking party loops. Each owns its models, optimizer states, rng streams,
// accountant and importance tracker for the whole run; the channel is the
// only connection to the other party.
GuestRunResult run_guest_party(Channel& channel, nn::SequentialModel& model,
                               const Matrix& train_features, const Matrix& test_features,
                               const ProtocolConfig& cfg, const GuestHooks* hooks = nullptr);

HostRunResult run_host_party(Channel& channel, nn::SequentialModel& embed,
                             nn::SequentialModel& tail, const Matrix& train_features,
                             const std::vector<int>& train_labels, const Matrix& test_features,
                             const std::vector<int>& test_labels, const ProtocolConfig& cfg,
                             const HostHooks* hooks = nullptr);

struct SplitTrainResult {
    GuestRunResult guest;
    HostRunResult host;
    SplitModel model; // trained sub-networks
};

// Convenience driver: builds the models, wires an in-process channel pair
// (or the two supplied channel ends), runs the guest on a worker thread and
// the host inline.
SplitTrainResult train_split(const Matrix& guest_train, const Matrix& host_train,
                             const std::vector<int>& train_labels, const Matrix& guest_test,
                             const Matrix& host_test, const std::vector<int>& test_labels,
                             ModelArch arch, std::size_t classes, const ProtocolConfig& cfg,
                             Channel* guest_channel = nullptr, Channel* host_channel = nullptr,
                             const GuestHooks* guest_hooks = nullptr,
                             const HostHooks* host_hooks = nullptr);

// Logits of the full split model on aligned guest/host views, eval mode,
// with the clean cut activation and wire quantization applied.
Matrix split_logits_eval(SplitModel& model, const Matrix& guest_features,
                         const Matrix& host_features);

double evaluate_logits(const Matrix& logits, const std::vector<int>& labels, TaskKind task,
                       std::size_t hit_k);

} // namespace r3split::splitnn
