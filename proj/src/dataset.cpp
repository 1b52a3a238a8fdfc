#include "simnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "simnet/rng.hpp"

namespace simnet {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarPixels = kCifarDim * kCifarDim * 3;
constexpr int kCifarRecord = 1 + kCifarPixels;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

}  // namespace

Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("cifar: needs >= 2 classes");
  Dataset data;
  data.num_classes = num_classes;
  for (const std::string& path : paths) {
    const std::vector<unsigned char> bytes = read_file(path);
    if (bytes.size() % kCifarRecord != 0) {
      throw std::runtime_error(path + ": size " + std::to_string(bytes.size()) +
                               " is not a multiple of " + std::to_string(kCifarRecord) +
                               "; trailing data begins at byte " +
                               std::to_string(bytes.size() - bytes.size() % kCifarRecord));
    }
    const std::size_t records = bytes.size() / kCifarRecord;
    for (std::size_t rec = 0; rec < records; ++rec) {
      const unsigned char* p = bytes.data() + rec * kCifarRecord;
      const int label = p[0];
      if (label >= num_classes) {
        throw std::runtime_error(path + ": label " + std::to_string(label) + " >= class count " +
                                 std::to_string(num_classes) + " at byte " +
                                 std::to_string(rec * kCifarRecord));
      }
      Tensor3 img(kCifarDim, kCifarDim, 3);
      for (int c = 0; c < 3; ++c) {
        const unsigned char* plane = p + 1 + c * kCifarDim * kCifarDim;
        for (int h = 0; h < kCifarDim; ++h) {
          for (int w = 0; w < kCifarDim; ++w) {
            img.at(h, w, c) = plane[h * kCifarDim + w] / 255.0;
          }
        }
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(label);
    }
  }
  return data;
}

void write_cifar_binary(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor3& img = data.images[i];
    if (img.height != kCifarDim || img.width != kCifarDim || img.channels != 3) {
      throw std::invalid_argument("cifar writer: images must be 32x32x3");
    }
    unsigned char record[kCifarRecord];
    record[0] = static_cast<unsigned char>(data.labels[i]);
    for (int c = 0; c < 3; ++c) {
      for (int h = 0; h < kCifarDim; ++h) {
        for (int w = 0; w < kCifarDim; ++w) {
          const double v = img.at(h, w, c) * 255.0;
          record[1 + c * kCifarDim * kCifarDim + h * kCifarDim + w] =
              static_cast<unsigned char>(std::lround(std::min(255.0, std::max(0.0, v))));
        }
      }
    }
    out.write(reinterpret_cast<const char*>(record), kCifarRecord);
  }
}

Dataset load_idx_raster(const std::string& images_path, const std::string& labels_path,
                        int num_classes) {
  const std::vector<unsigned char> ib = read_file(images_path);
  const std::vector<unsigned char> lb = read_file(labels_path);
  if (ib.size() < 16 || read_be32(ib.data()) != 0x803) {
    throw std::runtime_error(images_path + ": not an idx3-ubyte image file");
  }
  if (lb.size() < 8 || read_be32(lb.data()) != 0x801) {
    throw std::runtime_error(labels_path + ": not an idx1-ubyte label file");
  }
  const std::uint32_t n = read_be32(ib.data() + 4);
  const std::uint32_t h = read_be32(ib.data() + 8);
  const std::uint32_t w = read_be32(ib.data() + 12);
  if (read_be32(lb.data() + 4) != n) {
    throw std::runtime_error(labels_path + ": label count does not match image count");
  }
  if (ib.size() != 16 + static_cast<std::size_t>(n) * h * w) {
    throw std::runtime_error(images_path + ": truncated at byte " + std::to_string(ib.size()));
  }
  if (lb.size() != 8 + static_cast<std::size_t>(n)) {
    throw std::runtime_error(labels_path + ": truncated at byte " + std::to_string(lb.size()));
  }
  Dataset data;
  data.num_classes = num_classes;
  for (std::uint32_t i = 0; i < n; ++i) {
    const int label = lb[8 + i];
    if (label >= num_classes) {
      throw std::runtime_error(labels_path + ": label " + std::to_string(label) +
                               " >= class count at byte " + std::to_string(8 + i));
    }
    Tensor3 img(static_cast<int>(h), static_cast<int>(w), 1);
    const unsigned char* p = ib.data() + 16 + static_cast<std::size_t>(i) * h * w;
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) img.at(y, x, 0) = p[y * w + x] / 255.0;
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

Dataset make_separable2d(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  const double wx = 0.8, wy = 0.6, bias = 0.15;  // unit normal, fixed margin
  Dataset data;
  data.num_classes = 2;
  while (static_cast<int>(data.size()) < count) {
    const double x = coord(rng), y = coord(rng);
    const double margin = wx * x + wy * y - bias;
    if (std::abs(margin) < 0.25) continue;  // keep the classes strictly separated
    Tensor3 pt(1, 1, 2);
    pt.at(0, 0, 0) = x;
    pt.at(0, 0, 1) = y;
    data.images.push_back(std::move(pt));
    data.labels.push_back(margin > 0 ? 1 : 0);
  }
  return data;
}

Dataset make_mixture2d(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution pick(0.5);
  Dataset data;
  data.num_classes = 2;
  for (int i = 0; i < count; ++i) {
    const int label = pick(rng) ? 1 : 0;
    const double cx = label == 0 ? -1.0 : 1.0;
    const double cy = label == 0 ? 0.5 : -0.5;
    Tensor3 pt(1, 1, 2);
    pt.at(0, 0, 0) = cx + 0.8 * gauss(rng);
    pt.at(0, 0, 1) = cy + 0.8 * gauss(rng);
    data.images.push_back(std::move(pt));
    data.labels.push_back(label);
  }
  return data;
}

Dataset make_stripes(int count, int height, int width, std::uint64_t seed) {
  Dataset data;
  data.num_classes = 2;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, 0x57121385u, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> freq(0.25, 0.85);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.18, 0.32);
    std::uniform_real_distribution<double> gain(0.8, 1.2);
    std::normal_distribution<double> noise(0.0, 0.12);
    const int label = i % 2;
    const double f = freq(rng), ph = phase(rng), a = amp(rng);
    const double g0 = gain(rng), g1 = gain(rng), g2 = gain(rng);
    Tensor3 img(height, width, 3);
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        const double coord = label == 0 ? h : w;
        const double wave = a * std::sin(f * coord + ph);
        const double chan_gain[3] = {g0, g1, g2};
        for (int c = 0; c < 3; ++c) {
          double v = 0.5 + chan_gain[c] * wave + noise(rng);
          v = std::min(1.0, std::max(0.0, v));
          // Snap to the byte grid so the binary round trip is exact.
          img.at(h, w, c) = std::lround(v * 255.0) / 255.0;
        }
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

void split_holdout(const Dataset& all, int holdout, Dataset& train, Dataset& held) {
  if (holdout < 0 || holdout >= static_cast<int>(all.size())) {
    throw std::invalid_argument("holdout must be in [0, dataset size)");
  }
  train = Dataset{};
  held = Dataset{};
  train.num_classes = held.num_classes = all.num_classes;
  const std::size_t cut = all.size() - holdout;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < cut) {
      train.images.push_back(all.images[i]);
      train.labels.push_back(all.labels[i]);
    } else {
      held.images.push_back(all.images[i]);
      held.labels.push_back(all.labels[i]);
    }
  }
}

std::vector<double> channel_means(const Dataset& data) {
  if (data.images.empty()) throw std::invalid_argument("channel_means: empty dataset");
  const int c = data.images.front().channels;
  std::vector<double> means(c, 0.0);
  std::size_t cells = 0;
  for (const Tensor3& img : data.images) {
    for (int h = 0; h < img.height; ++h) {
      for (int w = 0; w < img.width; ++w) {
        for (int ch = 0; ch < c; ++ch) means[ch] += img.at(h, w, ch);
      }
    }
    cells += static_cast<std::size_t>(img.height) * img.width;
  }
  for (double& m : means) m /= static_cast<double>(cells);
  return means;
}

void subtract_channel_means(Dataset& data, const std::vector<double>& means) {
  for (Tensor3& img : data.images) {
    if (static_cast<int>(means.size()) != img.channels) {
      throw std::invalid_argument("subtract_channel_means: channel mismatch");
    }
    for (int h = 0; h < img.height; ++h) {
      for (int w = 0; w < img.width; ++w) {
        for (int c = 0; c < img.channels; ++c) img.at(h, w, c) -= means[c];
      }
    }
  }
}

}  // namespace simnet
