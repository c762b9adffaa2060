#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "largebatch/rng.hpp"
#include "largebatch/tensor.hpp"

namespace largebatch {

struct Dataset {
    Tensor features;             // [examples, input_dim]
    std::vector<int> labels;     // in [0, classes)
    std::size_t classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const { return features.dim(1); }

    // Copies the listed rows into a [indices.size(), input_dim] batch.
    Tensor gather(std::span<const std::size_t> indices) const;
    std::vector<int> gather_labels(std::span<const std::size_t> indices) const;

    // Throws Error unless labels match rows and lie in range.
    void validate() const;
};

struct DatasetSplits {
    Dataset train;
    Dataset validation;
};

// Class-conditional unit-variance Gaussians. Class k is centred at
// (separation / sqrt 2) e_k, so any two class means are `separation` apart.
// Labels are balanced, order is shuffled, and the first 80% become the
// training split. Requires input_dim >= classes >= 2, examples >= classes.
DatasetSplits make_synthetic_dataset(Rng& rng, std::size_t classes, std::size_t examples, std::size_t input_dim,
                                     double separation);

// Flat binary layout, little-endian:
//   u32 magic 0x44534554, u32 examples, u32 input_dim, u32 classes,
//   f32 features[examples * input_dim] (row-major), u16 labels[examples].
// Loading splits 80/20 in file order.
inline constexpr std::uint32_t kDatasetMagic = 0x44534554u;

void save_dataset_file(const std::filesystem::path& path, const Dataset& all);
DatasetSplits load_dataset_file(const std::filesystem::path& path);

// First 80% (at least one example) train, remainder validation.
DatasetSplits split_80_20(const Dataset& all);
std::size_t train_split_size(std::size_t examples);

}  // namespace largebatch
