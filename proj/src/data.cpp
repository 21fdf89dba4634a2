#include "r3split/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace r3split::data {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError(DataError::Code::truncated, "idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

} // namespace

Dataset load_mnist_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw DataError(DataError::Code::io, "idx: cannot open " + image_path);
    std::ifstream lab(label_path, std::ios::binary);
    if (!lab) throw DataError(DataError::Code::io, "idx: cannot open " + label_path);

    const std::uint32_t img_magic = read_be32(img, image_path);
    if (img_magic != kImageMagic)
        throw DataError(DataError::Code::bad_magic,
                        "idx: image magic " + std::to_string(img_magic) + " != 2051 in " +
                            image_path);
    const std::uint32_t n_images = read_be32(img, image_path);
    const std::uint32_t n_rows = read_be32(img, image_path);
    const std::uint32_t n_cols = read_be32(img, image_path);

    const std::uint32_t lab_magic = read_be32(lab, label_path);
    if (lab_magic != kLabelMagic)
        throw DataError(DataError::Code::bad_magic,
                        "idx: label magic " + std::to_string(lab_magic) + " != 2049 in " +
                            label_path);
    const std::uint32_t n_labels = read_be32(lab, label_path);

    if (n_images != n_labels)
        throw DataError(DataError::Code::count_mismatch,
                        "idx: " + std::to_string(n_images) + " images vs " +
                            std::to_string(n_labels) + " labels");

    const std::size_t width = std::size_t(n_rows) * n_cols;
    Dataset ds;
    ds.features = Matrix(n_images, width);
    ds.labels.resize(n_images);
    ds.meta = {"mnist", width, 10};

    std::vector<unsigned char> pixel_row(width);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img.read(reinterpret_cast<char*>(pixel_row.data()),
                 static_cast<std::streamsize>(width));
        if (!img)
            throw DataError(DataError::Code::truncated,
                            "idx: image data truncated at row " + std::to_string(i));
        for (std::size_t j = 0; j < width; ++j)
            ds.features(i, j) = static_cast<double>(pixel_row[j]) / 255.0;
    }
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        unsigned char l;
        lab.read(reinterpret_cast<char*>(&l), 1);
        if (!lab)
            throw DataError(DataError::Code::truncated,
                            "idx: label data truncated at row " + std::to_string(i));
        if (l > 9)
            throw DataError(DataError::Code::count_mismatch,
                            "idx: label value " + std::to_string(int(l)) + " out of range");
        ds.labels[i] = static_cast<int>(l);
    }
    // Parity of the digit doubles as a default binary property.
    ds.property.resize(n_labels);
    for (std::uint32_t i = 0; i < n_labels; ++i) ds.property[i] = ds.labels[i] % 2;
    return ds;
}

void write_mnist_idx(const Matrix& images, std::span<const int> labels, std::size_t image_rows,
                     std::size_t image_cols, const std::string& image_path,
                     const std::string& label_path) {
    if (images.cols != image_rows * image_cols)
        throw DataError(DataError::Code::bad_spec, "idx write: width mismatch");
    if (images.rows != labels.size())
        throw DataError(DataError::Code::count_mismatch, "idx write: row/label count mismatch");

    std::ofstream img(image_path, std::ios::binary);
    if (!img) throw DataError(DataError::Code::io, "idx write: cannot open " + image_path);
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(images.rows));
    write_be32(img, static_cast<std::uint32_t>(image_rows));
    write_be32(img, static_cast<std::uint32_t>(image_cols));
    std::vector<unsigned char> row(images.cols);
    for (std::size_t i = 0; i < images.rows; ++i) {
        for (std::size_t j = 0; j < images.cols; ++j) {
            const double v = std::clamp(images(i, j), 0.0, 1.0);
            row[j] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        img.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }

    std::ofstream lab(label_path, std::ios::binary);
    if (!lab) throw DataError(DataError::Code::io, "idx write: cannot open " + label_path);
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

Dataset synth_recsys(const RecsysSpec& spec, RngState& rng) {
    if (spec.users == 0 || spec.items == 0)
        throw DataError(DataError::Code::bad_spec, "synth_recsys: users and items must be > 0");
    if (spec.property_block_begin + spec.property_block_width > spec.embedding_dim)
        throw DataError(DataError::Code::bad_spec, "synth_recsys: property block out of range");
    if (spec.property_correlation < 0.0 || spec.property_correlation > 1.0)
        throw DataError(DataError::Code::bad_spec, "synth_recsys: correlation must be in [0,1]");

    const std::size_t dim = spec.embedding_dim;
    const std::size_t ld = spec.latent_dim;

    // Fixed projection from user latents to the observable embedding.
    RngState proj_rng = rng.fork(0x70726f6a);
    Matrix projection(dim, ld);
    for (auto& w : projection.data) w = proj_rng.normal() / std::sqrt(double(ld));
    Matrix item_latents(spec.items, ld);
    for (auto& w : item_latents.data) w = proj_rng.normal();

    const std::size_t rows = spec.users * spec.interactions_per_user;
    Dataset ds;
    ds.features = Matrix(rows, dim);
    ds.labels.resize(rows);
    ds.property.resize(rows);
    ds.meta = {"synth_recsys", dim, spec.items};

    std::vector<double> user_latent(ld);
    std::vector<double> affinity(spec.items);
    std::size_t row = 0;
    for (std::size_t u = 0; u < spec.users; ++u) {
        for (auto& z : user_latent) z = rng.normal();
        const int prop = rng.uniform() < 0.5 ? 1 : 0;

        for (std::size_t i = 0; i < spec.items; ++i) {
            double a = 0.0;
            for (std::size_t d = 0; d < ld; ++d) a += user_latent[d] * item_latents(i, d);
            affinity[i] = a;
        }

        for (std::size_t t = 0; t < spec.interactions_per_user; ++t, ++row) {
            for (std::size_t j = 0; j < dim; ++j) {
                double x = 0.0;
                for (std::size_t d = 0; d < ld; ++d) x += projection(j, d) * user_latent[d];
                x = 1.0 / (1.0 + std::exp(-x)); // squash into (0,1)
                ds.features(row, j) = x;
            }
            const double c = spec.property_correlation;
            for (std::size_t j = 0; j < spec.property_block_width; ++j) {
                const std::size_t col = spec.property_block_begin + j;
                const double target = prop ? 0.8 : 0.2;
                const double jitter = 0.05 * (rng.uniform() - 0.5);
                ds.features(row, col) =
                    (1.0 - c) * ds.features(row, col) + c * (target + jitter);
            }
            for (std::size_t j = 0; j < dim; ++j)
                ds.features(row, j) = std::clamp(ds.features(row, j), 0.0, 1.0);

            // Gumbel-max sampling over noisy affinities.
            std::size_t best = 0;
            double best_score = -1e300;
            for (std::size_t i = 0; i < spec.items; ++i) {
                const double g = -std::log(-std::log(rng.uniform_open()));
                const double s = affinity[i] / std::max(spec.rating_noise, 1e-9) + g;
                if (s > best_score) {
                    best_score = s;
                    best = i;
                }
            }
            ds.labels[row] = static_cast<int>(best);
            ds.property[row] = prop;
        }
    }
    return ds;
}

double hit_ratio_at_k(const Matrix& scores, std::span<const int> true_items, std::size_t k) {
    if (k == 0) throw std::invalid_argument("hit_ratio_at_k: k must be >= 1");
    if (k > scores.cols)
        throw std::invalid_argument("hit_ratio_at_k: k=" + std::to_string(k) +
                                    " exceeds item count " + std::to_string(scores.cols));
    if (scores.rows == 0 || true_items.size() != scores.rows)
        throw std::invalid_argument("hit_ratio_at_k: empty or misaligned inputs");

    std::size_t hits = 0;
    std::vector<std::size_t> idx(scores.cols);
    for (std::size_t r = 0; r < scores.rows; ++r) {
        std::iota(idx.begin(), idx.end(), 0);
        // Ties resolved toward the lower index.
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return scores(r, a) > scores(r, b);
        });
        const auto truth = static_cast<std::size_t>(true_items[r]);
        for (std::size_t j = 0; j < k; ++j) {
            if (idx[j] == truth) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

double classification_accuracy(const Matrix& logits, std::span<const int> labels) {
    if (logits.rows == 0 || labels.size() != logits.rows)
        throw std::invalid_argument("classification_accuracy: empty or misaligned inputs");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits(r, j) > logits(r, best)) best = j;
        if (static_cast<int>(best) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

void export_csv(const Dataset& ds, const std::string& path) {
    std::string out;
    out += "row";
    for (std::size_t j = 0; j < ds.features.cols; ++j) out += ",f" + std::to_string(j);
    out += ",label,property\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < ds.features.cols; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.6g", ds.features(i, j));
            out += buf;
        }
        out += "," + std::to_string(ds.labels[i]);
        out += ",";
        out += ds.property.empty() ? "0" : std::to_string(ds.property[i]);
        out += "\n";
    }
    write_text_file(path, out);
}

void write_pgm(const Matrix& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(DataError::Code::io, "pgm: cannot open " + path);
    out << "P5\n" << image.cols << " " << image.rows << "\n255\n";
    std::vector<unsigned char> row(image.cols);
    for (std::size_t i = 0; i < image.rows; ++i) {
        for (std::size_t j = 0; j < image.cols; ++j) {
            const double v = std::clamp(image(i, j), 0.0, 1.0);
            row[j] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
}

Matrix tile_images(const Matrix& flat_rows, std::size_t image_rows, std::size_t image_cols,
                   std::size_t per_row) {
    if (flat_rows.cols != image_rows * image_cols)
        throw std::invalid_argument("tile_images: flat width != image size");
    if (per_row == 0) throw std::invalid_argument("tile_images: per_row must be >= 1");
    const std::size_t n = flat_rows.rows;
    const std::size_t grid_rows = (n + per_row - 1) / per_row;
    const std::size_t gap = 2;
    Matrix grid(grid_rows * (image_rows + gap) - gap, per_row * (image_cols + gap) - gap, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t gr = (i / per_row) * (image_rows + gap);
        const std::size_t gc = (i % per_row) * (image_cols + gap);
        for (std::size_t r = 0; r < image_rows; ++r)
            for (std::size_t c = 0; c < image_cols; ++c)
                grid(gr + r, gc + c) = flat_rows(i, r * image_cols + c);
    }
    return grid;
}

void write_text_file(const std::string& path, const std::string& contents) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(DataError::Code::io, "cannot open " + path + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

} // namespace r3split::data
