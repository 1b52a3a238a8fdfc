#include "simnet/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace simnet {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

LayerConfig& layer_at(NetworkConfig& net, int index) {
  if (index < 1 || index > 64) throw std::invalid_argument("config: layer index out of range");
  if (static_cast<int>(net.layers.size()) < index) net.layers.resize(index);
  return net.layers[index - 1];
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  bool saw_layers = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": malformed section header");
      }
      section = line.substr(1, line.size() - 2);
      if (section != "data" && section != "network" && section != "train" &&
          section != "pretrain") {
        throw std::invalid_argument("config: unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw std::invalid_argument("config: key '" + key + "' appears before any section");
    }

    if (section == "data") {
      if (key == "format") cfg.data.format = value;
      else if (key == "train") cfg.data.train_paths = split(value, ',');
      else if (key == "train_labels") cfg.data.train_labels = value;
      else if (key == "test") cfg.data.test_paths = split(value, ',');
      else if (key == "test_labels") cfg.data.test_labels = value;
      else if (key == "kind") cfg.data.kind = value;
      else if (key == "count") cfg.data.count = to_int(value, key);
      else if (key == "classes") cfg.data.classes = to_int(value, key);
      else if (key == "holdout") cfg.data.holdout = to_int(value, key);
      else if (key == "center") cfg.data.center = to_bool(value, key);
      else if (key == "seed") cfg.data.seed = static_cast<std::uint64_t>(to_int(value, key));
      else throw std::invalid_argument("config: unknown key '" + key + "' in [data]");
    } else if (section == "network") {
      if (key == "similarity") cfg.network.similarity = value;
      else if (key == "weighted") cfg.network.weighted = to_bool(value, key);
      else if (key == "order_p") cfg.network.order_p = to_double(value, key);
      else if (key == "beta_class") cfg.network.beta_class = to_double(value, key);
      else if (key == "beta_global") cfg.network.beta_global = to_double(value, key);
      else if (key == "init_scale") cfg.network.init_scale = to_double(value, key);
      else if (key.rfind("layer", 0) == 0) {
        const std::size_t dot = key.find('.');
        if (dot == std::string::npos) {
          throw std::invalid_argument("config: malformed layer key '" + key + "'");
        }
        const int index = to_int(key.substr(5, dot - 5), key);
        const std::string field = key.substr(dot + 1);
        LayerConfig& layer = layer_at(cfg.network, index);
        saw_layers = true;
        if (field == "field") layer.field = to_int(value, key);
        else if (field == "stride") layer.stride = to_int(value, key);
        else if (field == "pad") layer.pad = to_int(value, key);
        else if (field == "whiten") layer.whiten = to_int(value, key);
        else if (field == "channels") layer.channels = to_int(value, key);
        else if (field == "pool_window") layer.pool_window = to_int(value, key);
        else if (field == "pool_stride") layer.pool_stride = to_int(value, key);
        else if (field == "pool_beta") layer.pool_beta = to_double(value, key);
        else if (field == "pool_beta_trainable") layer.pool_beta_trainable = to_bool(value, key);
        else if (field == "filters_trainable") layer.filters_trainable = to_bool(value, key);
        else throw std::invalid_argument("config: unknown layer field '" + field + "'");
      } else {
        throw std::invalid_argument("config: unknown key '" + key + "' in [network]");
      }
    } else if (section == "train") {
      if (key == "batch_size") cfg.train.batch_size = to_int(value, key);
      else if (key == "momentum") cfg.train.momentum = to_double(value, key);
      else if (key == "weight_decay") cfg.train.weight_decay = to_double(value, key);
      else if (key == "lr") cfg.train.learning_rate = to_double(value, key);
      else if (key == "lr_steps") {
        cfg.train.lr_steps.clear();
        if (!value.empty() && value != "none") {
          for (const std::string& step : split(value, ',')) {
            const std::size_t colon = step.find(':');
            if (colon == std::string::npos) {
              throw std::invalid_argument("config: lr_steps expects epoch:multiplier pairs");
            }
            cfg.train.lr_steps.push_back({to_int(step.substr(0, colon), key),
                                          to_double(step.substr(colon + 1), key)});
          }
        }
      } else if (key == "epochs") cfg.train.total_epochs = to_int(value, key);
      else if (key == "noise_std") cfg.train.noise_std = to_double(value, key);
      else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(value, key));
      else if (key == "augmentation") {
        if (value == "none") cfg.train.augmentation = Augmentation::None;
        else if (value == "hflip") cfg.train.augmentation = Augmentation::HFlip;
        else throw std::invalid_argument("config: augmentation must be none or hflip");
      } else {
        throw std::invalid_argument("config: unknown key '" + key + "' in [train]");
      }
    } else if (section == "pretrain") {
      if (key == "patches") cfg.pretrain.max_patches = to_int(value, key);
      else if (key == "images") cfg.pretrain.sample_images = to_int(value, key);
      else if (key == "mode") cfg.pretrain.mode = value;
      else if (key == "shape") cfg.pretrain.shape = value;
      else if (key == "shape_value") cfg.pretrain.shape_value = to_double(value, key);
      else if (key == "iters") cfg.pretrain.em_iters = to_int(value, key);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [pretrain]");
    }
  }
  if (!saw_layers && cfg.network.layers.empty()) {
    // Stage-less networks are allowed; nothing further to check here.
  }
  for (std::size_t i = 0; i < cfg.network.layers.size(); ++i) {
    if (cfg.network.layers[i].channels < 1) {
      throw std::invalid_argument("config: layer" + std::to_string(i + 1) +
                                  " needs channels >= 1");
    }
  }
  if (cfg.network.similarity != "lp" && cfg.network.similarity != "linear") {
    throw std::invalid_argument("config: similarity must be lp or linear");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ",";
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[data]\n";
  os << "format = " << cfg.data.format << "\n";
  if (!cfg.data.train_paths.empty()) os << "train = " << join(cfg.data.train_paths) << "\n";
  if (!cfg.data.train_labels.empty()) os << "train_labels = " << cfg.data.train_labels << "\n";
  if (!cfg.data.test_paths.empty()) os << "test = " << join(cfg.data.test_paths) << "\n";
  if (!cfg.data.test_labels.empty()) os << "test_labels = " << cfg.data.test_labels << "\n";
  os << "kind = " << cfg.data.kind << "\n";
  os << "count = " << cfg.data.count << "\n";
  os << "classes = " << cfg.data.classes << "\n";
  os << "holdout = " << cfg.data.holdout << "\n";
  os << "center = " << (cfg.data.center ? "true" : "false") << "\n";
  os << "seed = " << cfg.data.seed << "\n";

  os << "\n[network]\n";
  os << "similarity = " << cfg.network.similarity << "\n";
  os << "weighted = " << (cfg.network.weighted ? "true" : "false") << "\n";
  os << "order_p = " << fmt(cfg.network.order_p) << "\n";
  os << "beta_class = " << fmt(cfg.network.beta_class) << "\n";
  os << "beta_global = " << fmt(cfg.network.beta_global) << "\n";
  os << "init_scale = " << fmt(cfg.network.init_scale) << "\n";
  for (std::size_t i = 0; i < cfg.network.layers.size(); ++i) {
    const LayerConfig& layer = cfg.network.layers[i];
    const std::string p = "layer" + std::to_string(i + 1) + ".";
    os << p << "field = " << layer.field << "\n";
    os << p << "stride = " << layer.stride << "\n";
    os << p << "pad = " << layer.pad << "\n";
    os << p << "whiten = " << layer.whiten << "\n";
    os << p << "channels = " << layer.channels << "\n";
    os << p << "pool_window = " << layer.pool_window << "\n";
    os << p << "pool_stride = " << layer.pool_stride << "\n";
    os << p << "pool_beta = " << fmt(layer.pool_beta) << "\n";
    os << p << "pool_beta_trainable = " << (layer.pool_beta_trainable ? "true" : "false") << "\n";
    os << p << "filters_trainable = " << (layer.filters_trainable ? "true" : "false") << "\n";
  }

  os << "\n[train]\n";
  os << "batch_size = " << cfg.train.batch_size << "\n";
  os << "momentum = " << fmt(cfg.train.momentum) << "\n";
  os << "weight_decay = " << fmt(cfg.train.weight_decay) << "\n";
  os << "lr = " << fmt(cfg.train.learning_rate) << "\n";
  if (!cfg.train.lr_steps.empty()) {
    std::string steps;
    for (std::size_t i = 0; i < cfg.train.lr_steps.size(); ++i) {
      if (i) steps += ",";
      steps += std::to_string(cfg.train.lr_steps[i].epoch) + ":" +
               fmt(cfg.train.lr_steps[i].multiplier);
    }
    os << "lr_steps = " << steps << "\n";
  }
  os << "epochs = " << cfg.train.total_epochs << "\n";
  os << "noise_std = " << fmt(cfg.train.noise_std) << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "augmentation = " << (cfg.train.augmentation == Augmentation::HFlip ? "hflip" : "none")
     << "\n";

  os << "\n[pretrain]\n";
  os << "patches = " << cfg.pretrain.max_patches << "\n";
  os << "images = " << cfg.pretrain.sample_images << "\n";
  os << "mode = " << cfg.pretrain.mode << "\n";
  os << "shape = " << cfg.pretrain.shape << "\n";
  os << "shape_value = " << fmt(cfg.pretrain.shape_value) << "\n";
  os << "iters = " << cfg.pretrain.em_iters << "\n";
  return os.str();
}

Dataset load_train_data(const DataConfig& cfg) {
  if (cfg.format == "cifar_binary") {
    if (cfg.train_paths.empty()) throw std::invalid_argument("config: [data] train paths missing");
    return load_cifar_binary(cfg.train_paths, cfg.classes);
  }
  if (cfg.format == "idx_raster") {
    if (cfg.train_paths.size() != 1 || cfg.train_labels.empty()) {
      throw std::invalid_argument("config: idx_raster needs train (images) and train_labels");
    }
    return load_idx_raster(cfg.train_paths[0], cfg.train_labels, cfg.classes);
  }
  if (cfg.format == "synthetic") {
    if (cfg.kind == "separable2d") return make_separable2d(cfg.count, cfg.seed);
    if (cfg.kind == "mixture2d") return make_mixture2d(cfg.count, cfg.seed);
    if (cfg.kind == "stripes") return make_stripes(cfg.count, 32, 32, cfg.seed);
    throw std::invalid_argument("config: unknown synthetic kind '" + cfg.kind + "'");
  }
  throw std::invalid_argument("config: unknown data format '" + cfg.format + "'");
}

Dataset load_test_data(const DataConfig& cfg) {
  if (cfg.format == "cifar_binary") {
    if (cfg.test_paths.empty()) throw std::invalid_argument("config: [data] test paths missing");
    return load_cifar_binary(cfg.test_paths, cfg.classes);
  }
  if (cfg.format == "idx_raster") {
    if (cfg.test_paths.size() != 1 || cfg.test_labels.empty()) {
      throw std::invalid_argument("config: idx_raster needs test (images) and test_labels");
    }
    return load_idx_raster(cfg.test_paths[0], cfg.test_labels, cfg.classes);
  }
  throw std::invalid_argument("config: synthetic data has no separate test files; use holdout");
}

NetworkSpec build_network(const RunConfig& cfg, int in_h, int in_w, int in_c,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  NetworkSpec spec;
  int c = in_c;
  for (const LayerConfig& layer : cfg.network.layers) {
    LayerStage stage;
    stage.block.geom = PatchGeometry{layer.field, layer.field, layer.stride, layer.stride,
                                     layer.pad};
    const int d_in = layer.field * layer.field * c;
    const int d_out = layer.whiten > 0 ? layer.whiten : d_in;
    stage.block.filters = Matrix(d_out, d_in);
    const double filter_scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (double& v : stage.block.filters.data) v = filter_scale * gauss(rng);
    stage.block.sim.kind =
        cfg.network.similarity == "linear" ? SimilarityKind::Linear : SimilarityKind::Lp;
    stage.block.sim.weighted = cfg.network.weighted;
    stage.block.sim.order_p = cfg.network.order_p;
    stage.block.sim.templates = Matrix(layer.channels, d_out);
    for (double& v : stage.block.sim.templates.data) v = cfg.network.init_scale * gauss(rng);
    if (cfg.network.weighted) stage.block.sim.weights = Matrix(layer.channels, d_out, 1.0);
    stage.filters_trainable = layer.filters_trainable;
    if (layer.pool_window > 0) {
      stage.pool = PoolSpec{layer.pool_window, layer.pool_window, layer.pool_stride,
                            layer.pool_stride, layer.pool_beta, false};
      stage.pool_beta_trainable = layer.pool_beta_trainable;
    }
    spec.stages.push_back(std::move(stage));
    c = layer.channels;
  }
  spec.beta_class = cfg.network.beta_class;
  spec.offsets = Matrix(cfg.data.classes, c);
  spec.beta_global = cfg.network.beta_global;
  validate_network(spec, in_h, in_w, in_c);
  return spec;
}

PretrainOptions pretrain_options(const RunConfig& cfg) {
  PretrainOptions opt;
  opt.max_patches = cfg.pretrain.max_patches;
  opt.sample_images = cfg.pretrain.sample_images;
  if (cfg.pretrain.mode == "pca") opt.mode = WhitenMode::Pca;
  else if (cfg.pretrain.mode == "ica") opt.mode = WhitenMode::Ica;
  else throw std::invalid_argument("config: pretrain mode must be pca or ica");
  if (cfg.pretrain.shape == "fixed") opt.em.learn_shape = false;
  else if (cfg.pretrain.shape == "learned") opt.em.learn_shape = true;
  else throw std::invalid_argument("config: pretrain shape must be fixed or learned");
  opt.em.shape = cfg.pretrain.shape_value;
  opt.em.max_iters = cfg.pretrain.em_iters;
  opt.seed = cfg.train.seed;
  return opt;
}

}  // namespace simnet
