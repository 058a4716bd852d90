#pragma once

#include <cstdint>
#include <string>

#include "imsat/eval.hpp"
#include "imsat/matrix.hpp"

namespace imsat {

struct Dataset {
    std::string name;
    Matrix features;  // N x d
    bool has_labels = false;
    LabelSet labels;
    std::size_t image_h = 0;  // both nonzero when rows are flattened images
    std::size_t image_w = 0;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
};

// IDX image/label files (big-endian magic 0x803 / 0x801, unsigned bytes).
// Pixels map linearly from [0,255] onto [-1,1]; the image shape is kept.
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "");

// Rectangular numeric CSV. label_column >= 0 extracts that column as integer
// class ids; pass -1 for unlabeled data.
Dataset load_csv(const std::string& path, long label_column = -1);

// Writes features (and labels, as a trailing column) with full round-trip
// precision.
void save_csv(const std::string& path, const Dataset& dataset);

// Native binary dataset file built on the shared tensor container.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

// Interleaved spiral arms: arc a rotates a unit-radius parametric spiral by
// 2*pi*a/arcs; labels are arc indices. noise_std = 0 lands points exactly on
// the curves.
Dataset gen_spiral(std::size_t arcs = 3, std::size_t per_arc = 300, double noise_std = 0.05,
                   std::uint64_t seed = 0);

// K isotropic Gaussian clusters with centers at mutual distance >= separation.
Dataset gen_blobs(std::size_t k, std::size_t per_blob, std::size_t dim, double separation,
                  double noise_std, std::uint64_t seed);

// FNV-1a over the features, labels and shape; the manifest fingerprint.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

}  // namespace imsat
