#include "simnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace simnet {

namespace {

constexpr unsigned char kTagPreprocess = 1;
constexpr unsigned char kTagLayer = 2;
constexpr unsigned char kTagClassifier = 3;

// Little-endian byte stream. The build targets little-endian hosts; raw
// memcpy of doubles and uint32s preserves the format bit-for-bit.
struct Writer {
  std::vector<unsigned char> bytes;

  void u8(unsigned char v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    const std::size_t at = bytes.size();
    bytes.resize(at + 4);
    std::memcpy(bytes.data() + at, &v, 4);
  }
  void f64(double v) {
    const std::size_t at = bytes.size();
    bytes.resize(at + 8);
    std::memcpy(bytes.data() + at, &v, 8);
  }
  void f64_block(const std::vector<double>& block) {
    const std::size_t at = bytes.size();
    bytes.resize(at + 8 * block.size());
    std::memcpy(bytes.data() + at, block.data(), 8 * block.size());
  }
};

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t at = 0;

  void need(std::size_t count, const char* what) const {
    if (at + count > bytes.size()) {
      throw std::runtime_error(std::string("checkpoint truncated at byte ") +
                               std::to_string(bytes.size()) + " while reading " + what);
    }
  }
  unsigned char u8(const char* what) {
    need(1, what);
    return bytes[at++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + at, 4);
    at += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    double v;
    std::memcpy(&v, bytes.data() + at, 8);
    at += 8;
    return v;
  }
  void f64_block(std::vector<double>& block, const char* what) {
    need(8 * block.size(), what);
    std::memcpy(block.data(), bytes.data() + at, 8 * block.size());
    at += 8 * block.size();
  }
};

void write_layer(Writer& w, const LayerStage& stage, int in_channels) {
  w.u32(static_cast<std::uint32_t>(stage.block.geom.field_h));
  w.u32(static_cast<std::uint32_t>(stage.block.geom.field_w));
  w.u32(static_cast<std::uint32_t>(stage.block.geom.stride_h));
  w.u32(static_cast<std::uint32_t>(stage.block.geom.stride_w));
  w.u32(static_cast<std::uint32_t>(stage.block.geom.pad));
  w.u32(static_cast<std::uint32_t>(in_channels));
  w.u32(static_cast<std::uint32_t>(stage.block.filters.rows));
  w.u32(static_cast<std::uint32_t>(stage.block.sim.num_templates()));
  w.u8(stage.block.sim.kind == SimilarityKind::Linear ? 0 : 1);
  w.u8(stage.block.sim.weighted ? 1 : 0);
  w.u8(stage.filters_trainable ? 1 : 0);
  w.u8(stage.pool ? 1 : 0);
  if (stage.pool) {
    w.u32(static_cast<std::uint32_t>(stage.pool->window_h));
    w.u32(static_cast<std::uint32_t>(stage.pool->window_w));
    w.u32(static_cast<std::uint32_t>(stage.pool->stride_h));
    w.u32(static_cast<std::uint32_t>(stage.pool->stride_w));
    w.u8(stage.pool->global ? 1 : 0);
    w.u8(stage.pool_beta_trainable ? 1 : 0);
  }
  w.f64_block(stage.block.filters.data);
  w.f64_block(stage.block.sim.templates.data);
  if (stage.block.sim.weighted) w.f64_block(stage.block.sim.weights.data);
  w.f64(stage.block.sim.order_p);
  if (stage.pool) w.f64(stage.pool->beta);
}

LayerStage read_layer(Reader& r, int expected_channels) {
  LayerStage stage;
  stage.block.geom.field_h = static_cast<int>(r.u32("field_h"));
  stage.block.geom.field_w = static_cast<int>(r.u32("field_w"));
  stage.block.geom.stride_h = static_cast<int>(r.u32("stride_h"));
  stage.block.geom.stride_w = static_cast<int>(r.u32("stride_w"));
  stage.block.geom.pad = static_cast<int>(r.u32("pad"));
  const int in_channels = static_cast<int>(r.u32("in_channels"));
  if (expected_channels > 0 && in_channels != expected_channels) {
    throw std::runtime_error("checkpoint: stage input channels " + std::to_string(in_channels) +
                             " do not chain from previous stage (" +
                             std::to_string(expected_channels) + ")");
  }
  const int d_out = static_cast<int>(r.u32("d_out"));
  const int n = static_cast<int>(r.u32("templates"));
  const unsigned char kind = r.u8("kind");
  const bool weighted = r.u8("weighted") != 0;
  stage.filters_trainable = r.u8("filters_trainable") != 0;
  const bool has_pool = r.u8("has_pool") != 0;
  if (has_pool) {
    PoolSpec pool;
    pool.window_h = static_cast<int>(r.u32("pool_window_h"));
    pool.window_w = static_cast<int>(r.u32("pool_window_w"));
    pool.stride_h = static_cast<int>(r.u32("pool_stride_h"));
    pool.stride_w = static_cast<int>(r.u32("pool_stride_w"));
    pool.global = r.u8("pool_global") != 0;
    stage.pool_beta_trainable = r.u8("pool_beta_trainable") != 0;
    stage.pool = pool;
  }
  const int d_in = stage.block.geom.field_h * stage.block.geom.field_w * in_channels;
  stage.block.filters = Matrix(d_out, d_in);
  r.f64_block(stage.block.filters.data, "filters");
  stage.block.sim.kind = kind == 0 ? SimilarityKind::Linear : SimilarityKind::Lp;
  stage.block.sim.weighted = weighted;
  stage.block.sim.templates = Matrix(n, d_out);
  r.f64_block(stage.block.sim.templates.data, "templates");
  if (weighted) {
    stage.block.sim.weights = Matrix(n, d_out);
    r.f64_block(stage.block.sim.weights.data, "weights");
  }
  stage.block.sim.order_p = r.f64("order_p");
  if (stage.pool) stage.pool->beta = r.f64("pool_beta");
  return stage;
}

}  // namespace

void save_checkpoint(const NetworkSpec& spec, const std::string& path) {
  Writer w;
  w.bytes = {'S', 'I', 'M', 'N'};
  w.u8(kCheckpointVersion);
  const std::uint32_t stage_count = static_cast<std::uint32_t>(spec.stages.size()) + 1 +
                                    (spec.channel_means.empty() ? 0 : 1);
  w.u32(stage_count);

  auto stage_block = [&](unsigned char tag, const std::vector<unsigned char>& payload) {
    w.u8(tag);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.bytes.insert(w.bytes.end(), payload.begin(), payload.end());
  };

  if (!spec.channel_means.empty()) {
    Writer p;
    p.u32(static_cast<std::uint32_t>(spec.channel_means.size()));
    p.f64_block(spec.channel_means);
    stage_block(kTagPreprocess, p.bytes);
  }

  int channels = 0;  // first stage's input channels come from its own filter dims
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const LayerStage& stage = spec.stages[i];
    const int fh = stage.block.geom.field_h, fw = stage.block.geom.field_w;
    const int in_channels =
        i == 0 ? stage.block.filters.cols / (fh * fw) : channels;
    Writer p;
    write_layer(p, stage, in_channels);
    stage_block(kTagLayer, p.bytes);
    channels = stage.block.sim.num_templates();
  }

  Writer p;
  p.u32(static_cast<std::uint32_t>(spec.offsets.rows));
  p.u32(static_cast<std::uint32_t>(spec.offsets.cols));
  p.f64(spec.beta_class);
  p.f64_block(spec.offsets.data);
  p.f64(spec.beta_global);
  stage_block(kTagClassifier, p.bytes);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

NetworkSpec load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "SIMN", 4) != 0) {
    throw std::runtime_error(path + ": bad magic at offset 0 (not a checkpoint)");
  }
  r.at = 4;
  const unsigned char version = r.u8("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported format version " + std::to_string(version));
  }
  const std::uint32_t stage_count = r.u32("stage count");

  NetworkSpec spec;
  bool saw_classifier = false;
  int channels = 0;
  for (std::uint32_t s = 0; s < stage_count; ++s) {
    const unsigned char tag = r.u8("stage tag");
    const std::uint32_t len = r.u32("stage length");
    const std::size_t stage_end = r.at + len;
    r.need(len, "stage payload");
    switch (tag) {
      case kTagPreprocess: {
        const std::uint32_t c = r.u32("mean count");
        spec.channel_means.assign(c, 0.0);
        r.f64_block(spec.channel_means, "channel means");
        break;
      }
      case kTagLayer: {
        spec.stages.push_back(read_layer(r, channels));
        channels = spec.stages.back().block.sim.num_templates();
        break;
      }
      case kTagClassifier: {
        const int k = static_cast<int>(r.u32("class count"));
        const int n = static_cast<int>(r.u32("offset columns"));
        spec.beta_class = r.f64("beta_class");
        spec.offsets = Matrix(k, n);
        r.f64_block(spec.offsets.data, "offsets");
        spec.beta_global = r.f64("beta_global");
        saw_classifier = true;
        break;
      }
      default:
        throw std::runtime_error(path + ": unknown stage tag " + std::to_string(tag) +
                                 " at byte " + std::to_string(r.at - 5));
    }
    if (r.at != stage_end) {
      throw std::runtime_error(path + ": stage payload length mismatch at byte " +
                               std::to_string(r.at));
    }
  }
  if (!saw_classifier) throw std::runtime_error(path + ": missing classifier stage");
  if (r.at != bytes.size()) {
    throw std::runtime_error(path + ": trailing bytes after stage list at byte " +
                             std::to_string(r.at));
  }
  return spec;
}

std::size_t checkpoint_param_bytes(const NetworkSpec& spec) {
  std::size_t count = 0;
  for (const LayerStage& stage : spec.stages) {
    count += stage.block.filters.data.size();
    count += stage.block.sim.templates.data.size();
    if (stage.block.sim.weighted) count += stage.block.sim.weights.data.size();
  }
  count += spec.offsets.data.size();
  return 8 * count;
}

std::size_t checkpoint_overhead_bytes(const NetworkSpec& spec) {
  std::size_t bytes = 4 + 1 + 4;  // magic, version, stage count
  if (!spec.channel_means.empty()) {
    bytes += 5 + 4 + 8 * spec.channel_means.size();
  }
  for (const LayerStage& stage : spec.stages) {
    bytes += 5;            // tag + length
    bytes += 8 * 4 + 4;    // eight u32 dims, four u8 flags
    if (stage.pool) bytes += 4 * 4 + 2 + 8;  // pool dims, flags, beta
    bytes += 8;            // order_p
  }
  bytes += 5 + 2 * 4 + 2 * 8;  // classifier: tag+len, k, n, beta_class, beta_global
  return bytes;
}

}  // namespace simnet
