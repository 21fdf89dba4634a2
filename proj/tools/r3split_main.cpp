// Experiment runner: trains the two-party pipeline over a config file,
// sweeps privacy budgets, runs the attack harness, and writes the metric
// tables and the privacy ledger.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "r3split/config.hpp"
#include "r3split/experiment.hpp"

namespace {

std::string resolve_out_dir(const std::string& flag_value, const r3split::cli::RunConfig& cfg) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("R3SPLIT_OUT_DIR")) return env;
    return cfg.run.out_dir;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string transport;
    long long seed = -1;
    long long seeds = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("config", args.config_path, "run configuration file")->required();
    cmd->add_option("--out-dir", args.out_dir, "output directory (default: config/env)");
    cmd->add_option("--transport", args.transport, "inproc or tcp");
    cmd->add_option("--seed", args.seed, "override base seed");
    cmd->add_option("--seeds", args.seeds, "override seed count");
}

r3split::cli::RunConfig load_with_overrides(const CommonArgs& args) {
    auto cfg = r3split::cli::load_config(args.config_path);
    if (!args.transport.empty())
        cfg.run.transport = r3split::cli::transport_from_string(args.transport);
    if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    if (args.seeds > 0) cfg.train.seeds = static_cast<std::size_t>(args.seeds);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"r3split: privacy-preserving two-party split learning"};
    app.require_subcommand(1);

    CommonArgs run_args, attack_args, compare_args;
    CLI::App* run_cmd = app.add_subcommand("run", "train and evaluate over the budget sweep");
    add_common(run_cmd, run_args);
    CLI::App* attack_cmd = app.add_subcommand("attack", "run the configured attack sweep");
    add_common(attack_cmd, attack_args);
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "ours vs primitive Laplace and minimal DPSGD");
    add_common(compare_cmd, compare_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const auto cfg = load_with_overrides(run_args);
            return r3split::cli::run_experiment(cfg, resolve_out_dir(run_args.out_dir, cfg));
        }
        if (attack_cmd->parsed()) {
            const auto cfg = load_with_overrides(attack_args);
            return r3split::cli::run_attack_sweep(cfg,
                                                  resolve_out_dir(attack_args.out_dir, cfg));
        }
        const auto cfg = load_with_overrides(compare_args);
        return r3split::cli::compare_baselines(cfg, resolve_out_dir(compare_args.out_dir, cfg));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
