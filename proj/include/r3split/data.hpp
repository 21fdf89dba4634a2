#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "r3split/numerics.hpp"

namespace r3split::data {

struct DatasetMeta {
    std::string name;
    std::size_t width = 0;
    std::size_t classes = 0;
};

// Row-aligned features in [0,1], class labels, and an optional binary
// property column used as attack ground truth.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<int> property; // empty or one bit per row
    DatasetMeta meta;

    std::size_t rows() const { return features.rows; }
};

class DataError : public std::runtime_error {
public:
    enum class Code { io, bad_magic, truncated, count_mismatch, bad_spec };

    DataError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

// Big-endian IDX pair: image magic 2051 (3 dims), label magic 2049 (1 dim).
// Pixels are scaled to [0,1]; rows are flattened to width rows*cols.
Dataset load_mnist_idx(const std::string& image_path, const std::string& label_path);

// Inverse of the loader, for fixtures and exports. Pixel doubles in [0,1]
// are quantized to u8.
void write_mnist_idx(const Matrix& images, std::span<const int> labels, std::size_t image_rows,
                     std::size_t image_cols, const std::string& image_path,
                     const std::string& label_path);

struct RecsysSpec {
    std::size_t users = 600;
    std::size_t items = 50;
    std::size_t embedding_dim = 160;
    std::size_t interactions_per_user = 4;
    std::size_t latent_dim = 8;
    // Strength of the planted binary property in the designated feature
    // block: 0 = independent, 1 = fully determined.
    double property_correlation = 1.0;
    std::size_t property_block_begin = 0;
    std::size_t property_block_width = 32;
    double rating_noise = 0.25;
};

// Deterministic synthetic vertically-partitionable recommendation dataset:
// user embeddings in [0,1]^dim with a planted property, labels sampled from
// a softmax over latent user-item affinities.
Dataset synth_recsys(const RecsysSpec& spec, RngState& rng);

// Fraction of rows whose true item is among the k highest scores; ties go to
// the lower index. Throws on k == 0 or k > item count or empty input.
double hit_ratio_at_k(const Matrix& scores, std::span<const int> true_items, std::size_t k);

double classification_accuracy(const Matrix& logits, std::span<const int> labels);

// CSV export: row id, features..., label, property.
void export_csv(const Dataset& ds, const std::string& path);

// Binary PGM (P5). Values are clamped to [0,1] and quantized to u8.
void write_pgm(const Matrix& image, const std::string& path);

// Lays out a list of equally-sized images (each given as a flat [0,1] row,
// image_rows x image_cols) into a tiled grid with 2px separators.
Matrix tile_images(const Matrix& flat_rows, std::size_t image_rows, std::size_t image_cols,
                   std::size_t per_row);

void write_text_file(const std::string& path, const std::string& contents);

} // namespace r3split::data
