#pragma once

#include <string>
#include <vector>

#include "r3split/config.hpp"
#include "r3split/data.hpp"
#include "r3split/pipeline.hpp"

namespace r3split::cli {

// Materialized dataset plus the vertical views both parties train on.
struct LoadedData {
    Matrix guest_train, host_train;
    Matrix guest_test, host_test;
    std::vector<int> train_labels, test_labels;
    std::vector<int> train_property;
    std::size_t classes = 0;
    splitnn::ModelArch arch = splitnn::ModelArch::recsys;
    splitnn::TaskKind task = splitnn::TaskKind::recommendation;
    std::size_t image_rows = 0, image_cols = 0; // guest tile geometry, images only
    std::string name;
};

LoadedData load_and_partition(const RunConfig& cfg, std::uint64_t seed);

splitnn::ProtocolConfig build_protocol(const RunConfig& cfg, const LoadedData& data,
                                       double epsilon, std::uint64_t seed);

struct PointResult {
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::string defense; // mechanism name or "none"
    double utility = 0.0;
    std::string attack = "none";
    double attack_metric = 0.0;
    bool budget_exhausted = false;
};

// Sweep runner: writes metrics.csv, per-point ledger/importance files, and
// reconstruction grids. Returns a process exit code (0 ok, 2 when any point
// drained its budget mid-run; partial results are still flushed).
int run_experiment(const RunConfig& cfg, const std::string& out_dir);

// Attack sweep: writes attacks.csv with (attack, side, epsilon, seed, metric).
int run_attack_sweep(const RunConfig& cfg, const std::string& out_dir);

// Ours vs the primitive Laplace and minimal DPSGD baselines plus the
// undefended run, all at the same total budget. Writes comparison.csv.
int compare_baselines(const RunConfig& cfg, const std::string& out_dir);

std::string format_point_suffix(double epsilon, std::uint64_t seed);

} // namespace r3split::cli
