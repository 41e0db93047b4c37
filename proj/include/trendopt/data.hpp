#pragma once

// Datasets, synthetic generators, the IDX (MNIST family) loader and seeded
// minibatch streams.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trendopt/error.hpp"

namespace trendopt {

enum class Split { Train, Test };

struct Normalization {
    double scale = 1.0;   // feature = raw * scale + offset
    double offset = 0.0;
};

/// Row-major n x d feature matrix with integer class labels.
struct Dataset {
    std::vector<double> features;
    std::vector<std::uint32_t> labels;
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t num_classes = 0;
    Split split = Split::Train;
    Normalization normalization;

    std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }

    void validate() const {
        if (n == 0) throw InvalidArgument("dataset: no samples");
        if (features.size() != n * d || labels.size() != n)
            throw InvalidArgument("dataset: storage does not match n x d");
        for (auto y : labels)
            if (y >= num_classes) throw InvalidArgument("dataset: label out of class range");
        for (std::size_t i = 0; i < features.size(); ++i)
            if (!std::isfinite(features[i]))
                throw NumericError("dataset: non-finite feature", i);
    }
};

/// A view of selected rows of a dataset.
struct Batch {
    const Dataset* data = nullptr;
    std::span<const std::size_t> indices;

    std::size_t size() const noexcept { return indices.size(); }
};

/// SplitMix64 finaliser over two words; derives independent RNG stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Synthetic classification

/// Gaussian class-conditional data with unit covariance. Class means are
/// `class_separation / sqrt(2)` times orthonormal random directions, so every
/// pair of means is `class_separation` apart. When K > d the directions are
/// random unit vectors instead (orthogonality is impossible).
///
/// Means depend only on `seed`; `sample_stream` selects an independent draw
/// of samples from the same distribution (0 for train, 1 for test, ...).
inline Dataset synth_classification(std::uint64_t seed, std::size_t n, std::size_t d,
                                    std::size_t num_classes, double class_separation,
                                    std::uint64_t sample_stream = 0) {
    if (n == 0 || d == 0 || num_classes == 0)
        throw InvalidArgument("synth_classification: n, d and K must be >= 1");
    if (!(class_separation >= 0.0)) throw InvalidArgument("synth_classification: separation < 0");
    if (num_classes > n) throw InvalidArgument("synth_classification: more classes than samples");

    std::normal_distribution<double> normal(0.0, 1.0);

    std::mt19937_64 mean_rng(mix_seed(seed, 0));
    std::vector<double> means(num_classes * d);
    for (std::size_t k = 0; k < num_classes; ++k) {
        double* u = means.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) u[j] = normal(mean_rng);
        if (num_classes <= d) {
            for (std::size_t p = 0; p < k; ++p) {
                const double* q = means.data() + p * d;
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += u[j] * q[j];
                for (std::size_t j = 0; j < d; ++j) u[j] -= dot * q[j];
            }
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += u[j] * u[j];
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j) u[j] /= norm;
    }
    const double radius = class_separation / std::sqrt(2.0);

    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.num_classes = num_classes;
    ds.split = sample_stream == 0 ? Split::Train : Split::Test;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<std::uint32_t>(i % num_classes);

    std::mt19937_64 rng(mix_seed(seed, sample_stream + 1));
    std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
    ds.features.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* mu = means.data() + ds.labels[i] * d;
        for (std::size_t j = 0; j < d; ++j)
            ds.features[i * d + j] = radius * mu[j] + normal(rng);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// IDX loader

namespace detail {

inline bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::vector<unsigned char> bytes;
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw FormatError("cannot open '" + path + "'", 0);
        std::array<unsigned char, 1 << 16> buf{};
        int got = 0;
        while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0)
            bytes.insert(bytes.end(), buf.begin(), buf.begin() + got);
        int err = 0;
        const char* msg = gzerror(f, &err);
        const bool failed = got < 0 || (err != Z_OK && err != Z_STREAM_END);
        const std::string why = failed ? std::string(msg) : std::string();
        gzclose(f);
        if (failed) throw FormatError("gzip error in '" + path + "': " + why, bytes.size());
        return bytes;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'", 0);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& what) {
    if (off + 4 > b.size()) throw FormatError(what + ": truncated header", b.size());
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;      // n x rows x cols
inline constexpr std::uint32_t kIdxImagesRgbMagic = 0x00000804;   // n x rows x cols x channels
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Loads unsigned-byte IDX image/label files (optionally gzip-compressed,
/// selected by a `.gz` extension). Pixels are scaled to [0, 1], or to [-1, 1]
/// when `signed_range` is set. Four-dimensional image files are converted to
/// grayscale by averaging the trailing channel axis.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        bool signed_range = false) {
    const auto img = detail::read_file_bytes(images_path);
    const auto lab = detail::read_file_bytes(labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
    if (img_magic != kIdxImagesMagic && img_magic != kIdxImagesRgbMagic)
        throw FormatError(images_path + ": bad image magic", 0);
    const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelsMagic) throw FormatError(labels_path + ": bad label magic", 0);

    const std::size_t rank = img_magic & 0xFF;
    std::vector<std::size_t> dims(rank);
    for (std::size_t k = 0; k < rank; ++k) dims[k] = detail::read_be32(img, 4 + 4 * k, images_path);
    const std::size_t img_header = 4 + 4 * rank;
    const std::size_t n = dims[0];
    const std::size_t pixels = dims[1] * dims[2];
    const std::size_t channels = rank == 4 ? dims[3] : 1;
    if (channels == 0) throw FormatError(images_path + ": zero channels", 16);
    const std::size_t img_payload = n * pixels * channels;
    if (img.size() < img_header + img_payload)
        throw FormatError(images_path + ": truncated payload, expected " +
                              std::to_string(img_header + img_payload) + " bytes",
                          img.size());

    const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
    if (n_labels != n)
        throw FormatError("image/label count mismatch: " + std::to_string(n) + " images, " +
                              std::to_string(n_labels) + " labels",
                          4);
    if (lab.size() < 8 + n)
        throw FormatError(labels_path + ": truncated payload, expected " + std::to_string(8 + n) +
                              " bytes",
                          lab.size());
    if (n == 0) throw FormatError(images_path + ": no samples", 4);

    Dataset ds;
    ds.n = n;
    ds.d = pixels;
    ds.normalization = signed_range ? Normalization{2.0 / 255.0, -1.0}
                                    : Normalization{1.0 / 255.0, 0.0};
    ds.features.resize(n * pixels);
    const unsigned char* src = img.data() + img_header;
    for (std::size_t i = 0; i < n * pixels; ++i) {
        double raw = 0.0;
        for (std::size_t c = 0; c < channels; ++c) raw += src[i * channels + c];
        raw /= static_cast<double>(channels);
        ds.features[i] = raw * ds.normalization.scale + ds.normalization.offset;
    }
    ds.labels.resize(n);
    std::uint32_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

// ---------------------------------------------------------------------------
// Minibatching

/// Walks a dataset in seed-determined shuffled epochs. The last batch of an
/// epoch may be short.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : n_(n), batch_size_(batch_size), seed_(seed), order_(n) {
        if (n == 0) throw InvalidArgument("BatchStream: empty dataset");
        if (batch_size == 0) throw InvalidArgument("BatchStream: batch size must be >= 1");
        reshuffle();
    }

    /// Indices of the next batch; valid until the following call.
    std::span<const std::size_t> next_batch() {
        if (cursor_ >= n_) {
            ++epoch_;
            reshuffle();
        }
        const std::size_t len = std::min(batch_size_, n_ - cursor_);
        std::span<const std::size_t> out(order_.data() + cursor_, len);
        cursor_ += len;
        return out;
    }

    bool epoch_finished() const noexcept { return cursor_ >= n_; }
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batches_per_epoch() const noexcept { return (n_ + batch_size_ - 1) / batch_size_; }
    std::size_t batch_size() const noexcept { return batch_size_; }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::mt19937_64 rng(mix_seed(seed_, epoch_));
        std::shuffle(order_.begin(), order_.end(), rng);
        cursor_ = 0;
    }

    std::size_t n_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

}  // namespace trendopt
