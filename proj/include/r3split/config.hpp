#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "r3split/attacks.hpp"
#include "r3split/pipeline.hpp"

namespace r3split::cli {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& msg)
        : std::runtime_error("config line " + std::to_string(line) + ": " + msg),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

enum class DatasetKind { digits, mnist, synth };
enum class AttackKind { none, inference, reconstruction, fsha };
enum class TransportKind { inproc, tcp };

DatasetKind dataset_from_string(const std::string& s);
std::string to_string(DatasetKind k);
AttackKind attack_from_string(const std::string& s);
std::string to_string(AttackKind k);
TransportKind transport_from_string(const std::string& s);
std::string to_string(TransportKind k);

struct DatasetConfig {
    DatasetKind kind = DatasetKind::synth;
    splitnn::TaskKind task = splitnn::TaskKind::recommendation;
    std::string data_dir = "data";
    std::string mnist_dir;
    std::size_t train_rows = 0; // 0 = all available
    std::size_t test_rows = 0;
    // synth knobs
    std::size_t users = 600;
    std::size_t items = 50;
    std::size_t dim = 160;
    std::size_t interactions = 4;
    double correlation = 1.0;

    bool operator==(const DatasetConfig&) const = default;
};

struct SplitConfig {
    std::size_t guest_width = 0; // 0 = default for the dataset kind
    bool padding = false;
    splitnn::MergeStrategy merge = splitnn::MergeStrategy::avg;

    bool operator==(const SplitConfig&) const = default;
};

struct PrivacyConfig {
    splitnn::Protect protect = splitnn::Protect::none;
    splitnn::Mechanism kind = splitnn::Mechanism::r3elu;
    double epsilon = 1.0;
    double ratio = 0.5;
    std::size_t k = 4;
    double clip_c = 1.0;
    splitnn::Allocation allocation = splitnn::Allocation::uniform;
    privacy::Schedule schedule = privacy::Schedule::fixed_step;
    privacy::ResponseDraw draw = privacy::ResponseDraw::uniform;
    bool backward_noise_all = true;
    double budget_cap = std::numeric_limits<double>::infinity();
    double delta = 1e-5;

    bool operator==(const PrivacyConfig&) const = default;
};

struct TrainSection {
    std::size_t epochs = 5;
    std::size_t batch = 32;
    double lr = 0.01;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    std::uint64_t seed = 1;
    std::size_t seeds = 5;

    bool operator==(const TrainSection&) const = default;
};

struct AttackSection {
    AttackKind kind = AttackKind::none;
    attacks::AttackerSide side = attacks::AttackerSide::host;
    std::size_t iterations = 2000;
    double shadow_fraction = 0.5;
    std::size_t latent = 16;
    double scale = 1.0;
    double attack_lr = 0.002;

    bool operator==(const AttackSection&) const = default;
};

struct RunSection {
    TransportKind transport = TransportKind::inproc;
    std::string listen;
    std::string connect;
    std::string out_dir = "out";
    std::vector<double> sweep; // empty = single point at privacy.epsilon

    bool operator==(const RunSection&) const = default;
};

struct RunConfig {
    DatasetConfig dataset;
    SplitConfig split;
    PrivacyConfig privacy;
    TrainSection train;
    AttackSection attack;
    RunSection run;

    bool operator==(const RunConfig&) const = default;
};

// Parses the line-oriented `key = value` format with bracketed section
// headers. Unknown sections/keys, type mismatches, and invariant violations
// raise ConfigError with the offending line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

} // namespace r3split::cli
