#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/network.hpp"
#include "simnet/pretrain.hpp"
#include "simnet/training.hpp"

namespace simnet {

// Flat, line-oriented run configuration: `[section]` headers and
// `key = value` lines; '#' starts a comment. Unknown sections or keys are
// hard errors.

struct DataConfig {
  std::string format = "synthetic";  // cifar_binary | idx_raster | synthetic
  std::vector<std::string> train_paths;
  std::string train_labels;  // idx_raster only
  std::vector<std::string> test_paths;
  std::string test_labels;   // idx_raster only
  std::string kind = "stripes";  // synthetic: separable2d | mixture2d | stripes
  int count = 2000;
  int classes = 2;
  int holdout = 0;
  bool center = false;       // per-channel mean subtraction
  std::uint64_t seed = 1;    // synthetic generator seed
};

struct LayerConfig {
  int field = 5;
  int stride = 1;
  int pad = 0;
  int whiten = 0;  // conv output dims; 0 keeps the patch dimension
  int channels = 16;
  int pool_window = 0;  // 0 = no pooling after this layer
  int pool_stride = 2;
  double pool_beta = 60.0;
  bool pool_beta_trainable = false;
  bool filters_trainable = true;
};

struct NetworkConfig {
  std::string similarity = "lp";  // linear | lp
  bool weighted = true;
  double order_p = 2.0;
  double beta_class = 1.0;
  double beta_global = 1.0;
  double init_scale = 0.5;  // template spread for random initialization
  std::vector<LayerConfig> layers;
};

struct PretrainSection {
  int max_patches = 100000;
  int sample_images = 2000;
  std::string mode = "pca";    // pca | ica
  std::string shape = "fixed"; // fixed | learned
  double shape_value = 2.0;
  int em_iters = 300;
};

struct RunConfig {
  DataConfig data;
  NetworkConfig network;
  TrainConfig train;
  PretrainSection pretrain;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Full dataset described by the [data] section (training files or the
// synthetic generator). Held-out splitting is the caller's concern.
Dataset load_train_data(const DataConfig& cfg);
// Test-split data; for synthetic formats this is the holdout carved from the
// generated set, so callers use split_holdout instead.
Dataset load_test_data(const DataConfig& cfg);

// Randomly initialized network for the configured architecture.
NetworkSpec build_network(const RunConfig& cfg, int in_h, int in_w, int in_c,
                          std::uint64_t seed);

PretrainOptions pretrain_options(const RunConfig& cfg);

}  // namespace simnet
