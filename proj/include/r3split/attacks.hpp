#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "r3split/data.hpp"
#include "r3split/nn.hpp"
#include "r3split/pipeline.hpp"

namespace r3split::attacks {

enum class AttackerSide { host, guest };

AttackerSide side_from_string(const std::string& s);
std::string to_string(AttackerSide s);

// Mean squared error in the normalized feature space, averaged over rows and
// features.
double mean_squared_error(const Matrix& a, const Matrix& b);

// Per-row binary logistic loss on a single-logit column; returns the mean
// loss and writes the logit gradient.
double logistic_loss(const Matrix& logits, const std::vector<double>& targets, Matrix& grad);

struct PropertyInferenceConfig {
    AttackerSide side = AttackerSide::host;
    std::size_t iterations = 2000;
    std::size_t batch = 32;
    double learning_rate = 0.01;
    double shadow_fraction = 0.5;
    std::uint64_t seed = 99;
};

struct PropertyInferenceResult {
    double attack_accuracy = 0.0;
    std::size_t shadow_rows = 0;
    std::size_t holdout_rows = 0;
    std::size_t property_classes = 0;
};

// Trains the victim pipeline under cfg, capturing the channel the attacker
// legitimately observes (smashed data for the host, partial losses for the
// guest), then fits a small MLP on (observation, property) pairs from the
// shadow rows and reports held-out accuracy.
PropertyInferenceResult run_property_inference(
    const Matrix& guest_train, const Matrix& host_train, const std::vector<int>& labels,
    const std::vector<int>& property, splitnn::ModelArch arch, std::size_t classes,
    const splitnn::ProtocolConfig& victim_cfg, const PropertyInferenceConfig& atk);

struct ReconstructionConfig {
    AttackerSide side = AttackerSide::host;
    std::size_t iterations = 2000;
    std::size_t batch = 32;
    double learning_rate = 0.002;
    std::size_t latent_dim = 16;
    double shadow_fraction = 0.5;
    // Balances the shadow anchor against the adversarial term; the anchor is
    // what ties generated rows to their observed channel vectors.
    double supervised_weight = 30.0;
    std::uint64_t seed = 99;
};

struct ReconstructionResult {
    double mse = 0.0;
    double mean_baseline_mse = 0.0; // predictor emitting the shadow mean
    std::size_t holdout_rows = 0;
};

// GAN-style reconstruction: a conditional generator consumes latent noise
// plus the observed channel vector, a discriminator separates shadow-real
// from generated feature rows, and the attacker's shadow pairs anchor the
// mapping. Reports paired MSE on held-out rows.
ReconstructionResult run_reconstruction(
    const Matrix& guest_train, const Matrix& host_train, const std::vector<int>& labels,
    splitnn::ModelArch arch, std::size_t classes, const splitnn::ProtocolConfig& victim_cfg,
    const ReconstructionConfig& atk);

struct FshaConfig {
    std::size_t batch = 32; // must match the victim batch size
    double learning_rate = 0.001;
    double gradient_scale = 0.05; // multiplier on the substituted gradient
    // Stabilizers for the distinguisher game: per-weight clipping keeps the
    // logit field smooth, the throttle stops distinguisher updates once it
    // separates too well, and the inverse is trained on jittered codes so it
    // tolerates residual mismatch of the hijacked representation.
    double critic_clip = 0.3;
    double d_throttle = 0.3;
    double denoise_sigma = 0.05;
    std::uint64_t seed = 99;
    std::size_t eval_rows = 256;
    // When set, dumps tiled reconstruction/target grids as PGM.
    std::optional<std::string> grid_dir;
    std::size_t image_rows = 28;
    std::size_t image_cols = 14;
};

struct FshaResult {
    double mse = 0.0;
    double mean_baseline_mse = 0.0;
    std::size_t victim_iterations = 0;
    double final_distinguisher_loss = 0.0;
};

// Malicious host: discards the task loss entirely and substitutes gradients
// of a distinguisher objective that pins the guest's representation to a
// pilot's feature space, then inverts captured victim activations with the
// pilot's approximate inverse. The guest trains over victim and shadow rows
// together (one row universe, disjoint sets); victim_cfg.train_rows is
// replaced by the combined count and epochs count against it. Throws if
// either row set is empty.
FshaResult run_fsha(const Matrix& guest_victim, const Matrix& shadow_guest,
                    const splitnn::ProtocolConfig& victim_cfg, splitnn::ModelArch arch,
                    const FshaConfig& atk);

} // namespace r3split::attacks
