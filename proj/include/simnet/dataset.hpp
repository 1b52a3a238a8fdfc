#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simnet/tensor.hpp"

namespace simnet {

struct Dataset {
  std::vector<Tensor3> images;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
};

// CIFAR binary records: 1 label byte + 3072 pixel bytes (channel-planar
// R,G,B, each 32x32 row-major). Pixels are scaled to [0,1] doubles. Throws
// with the offending byte offset on truncation or out-of-range labels.
Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes);
void write_cifar_binary(const Dataset& data, const std::string& path);

// IDX pairs (ubyte images magic 0x803, labels magic 0x801); single channel.
Dataset load_idx_raster(const std::string& images_path, const std::string& labels_path,
                        int num_classes);

// Strictly separable two-class 2-D point task; images are 1x1x2 tensors.
Dataset make_separable2d(int count, std::uint64_t seed);

// Two-class 2-D Gaussian mixture with overlap.
Dataset make_mixture2d(int count, std::uint64_t seed);

// Two-class oriented-texture images (class 0 horizontal, class 1 vertical)
// on the CIFAR byte grid, so a write/load round trip through the binary
// format is exact.
Dataset make_stripes(int count, int height, int width, std::uint64_t seed);

// Last n records become the held-out split (taken in stored order).
void split_holdout(const Dataset& all, int holdout, Dataset& train, Dataset& held);

// Mean pixel value per channel over the set.
std::vector<double> channel_means(const Dataset& data);

// In-place per-channel mean subtraction.
void subtract_channel_means(Dataset& data, const std::vector<double>& means);

}  // namespace simnet
