#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/rng.hpp"
#include "sparselab/tensor.hpp"

namespace sparselab {

struct Dataset {
    Tensor inputs;  // [N, ...sample]
    std::vector<std::int64_t> labels;
    std::int64_t class_count = 0;
    std::string tag = "full";

    std::int64_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
    Shape sample_shape() const;
    void validate() const;

    // Copies the given rows into a [count, ...sample] batch.
    void gather(const std::vector<std::int64_t>& rows, Tensor& x_out,
                std::vector<std::int64_t>& y_out) const;
};

// IDX with u8 payload; pixels scaled to [0, 1]. Malformed input errors
// name the byte offset.
Tensor read_idx(const std::string& path);
void write_idx_u8(const std::string& path, const Shape& dims, const std::vector<std::uint8_t>& bytes);

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path,
                      std::int64_t class_count);

// CIFAR-10 binary: 3073-byte records, 1 label byte + 3072 channel-planar pixels.
Dataset read_cifar10_bin(const std::string& path);

// kinds: blobs (4 classes, 2d), two_moons (2 classes, 2d), spirals
// (3 classes, 2d), digits (10 classes, 28x28 glyph images).
Dataset make_synthetic(const std::string& kind, std::int64_t n, double noise, std::uint64_t seed);

// Seed-deterministic shuffle then partition; fractions must sum to 1.
std::vector<Dataset> split_shuffle(const Dataset& ds, const std::vector<double>& fractions,
                                   std::uint64_t seed);

// Channels: [N,C,H,W] -> per channel; [N,H,W] -> one channel; [N,F] -> per feature.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero-variance channels get stddev 1
};

NormStats compute_norm_stats(const Dataset& ds);
void apply_normalization(Dataset& ds, const NormStats& stats);

// Reinterprets each sample with a new shape of equal element count.
Dataset reshape_inputs(const Dataset& ds, const Shape& sample);

void write_csv(const Dataset& ds, const std::string& path);

}  // namespace sparselab
