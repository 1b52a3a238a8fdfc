#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "simnet/checkpoint.hpp"
#include "simnet/config.hpp"
#include "simnet/dataset.hpp"
#include "simnet/flops.hpp"
#include "simnet/selfcheck.hpp"
#include "test_nets.hpp"

using namespace simnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "simnet_test_io";
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cifar loader: single record, truncation, handcrafted pixels") {
  const fs::path dir = scratch_dir();

  // Single 3073-byte record.
  std::vector<unsigned char> rec(3073, 0);
  rec[0] = 1;               // label
  rec[1] = 255;             // R plane, pixel (0,0)
  rec[1 + 1024] = 128;      // G plane, pixel (0,0)
  rec[1 + 2048 + 33] = 51;  // B plane, pixel (1,1)
  const fs::path one = dir / "one.bin";
  write_bytes(one, rec);
  Dataset data = load_cifar_binary({one.string()}, 2);
  REQUIRE(data.size() == 1);
  CHECK(data.labels[0] == 1);
  CHECK(data.images[0].at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(data.images[0].at(0, 0, 1) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  CHECK(data.images[0].at(1, 1, 2) == doctest::Approx(51.0 / 255.0).epsilon(1e-12));
  CHECK(data.images[0].at(0, 1, 0) == 0.0);

  // 10 records plus one trailing byte: rejected with the byte offset named.
  std::vector<unsigned char> bad(3073 * 10 + 1, 0);
  const fs::path trunc = dir / "trunc.bin";
  write_bytes(trunc, bad);
  CHECK_THROWS_WITH_AS(load_cifar_binary({trunc.string()}, 2), doctest::Contains("30730"),
                       std::runtime_error);

  // Label out of range.
  rec[0] = 7;
  write_bytes(one, rec);
  CHECK_THROWS_AS(load_cifar_binary({one.string()}, 2), std::runtime_error);
}

TEST_CASE("cifar writer round trip is exact for byte-grid images") {
  const fs::path dir = scratch_dir();
  Dataset stripes = make_stripes(6, 32, 32, 99);
  const fs::path path = dir / "stripes.bin";
  write_cifar_binary(stripes, path.string());
  Dataset back = load_cifar_binary({path.string()}, 2);
  REQUIRE(back.size() == stripes.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    REQUIRE(back.labels[i] == stripes.labels[i]);
    REQUIRE(back.images[i].data == stripes.images[i].data);
  }
}

TEST_CASE("idx loader reads a handcrafted pair and rejects bad magic") {
  const fs::path dir = scratch_dir();
  // 2 images of 2x3.
  std::vector<unsigned char> img{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,
                                 10, 20, 30, 40, 50, 60, 7, 14, 21, 28, 35, 42};
  std::vector<unsigned char> lab{0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
  const fs::path ip = dir / "img.idx", lp = dir / "lab.idx";
  write_bytes(ip, img);
  write_bytes(lp, lab);
  Dataset data = load_idx_raster(ip.string(), lp.string(), 2);
  REQUIRE(data.size() == 2);
  CHECK(data.images[0].height == 2);
  CHECK(data.images[0].width == 3);
  CHECK(data.labels[0] == 1);
  CHECK(data.images[1].at(0, 1, 0) == doctest::Approx(14.0 / 255.0).epsilon(1e-12));

  img[3] = 9;
  write_bytes(ip, img);
  CHECK_THROWS_AS(load_idx_raster(ip.string(), lp.string(), 2), std::runtime_error);
}

TEST_CASE("synthetic generators are deterministic and sane") {
  Dataset a = make_separable2d(100, 5);
  Dataset b = make_separable2d(100, 5);
  REQUIRE(a.size() == 100);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.images[i].data == b.images[i].data);
    REQUIRE(a.labels[i] == b.labels[i]);
  }
  Dataset stripes = make_stripes(8, 32, 32, 3);
  int c0 = 0;
  for (int label : stripes.labels) c0 += label == 0 ? 1 : 0;
  CHECK(c0 == 4);
  for (double v : stripes.images[0].data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("holdout split takes the last records; channel means center the data") {
  Dataset all = make_mixture2d(50, 7);
  Dataset train, held;
  split_holdout(all, 10, train, held);
  REQUIRE(train.size() == 40);
  REQUIRE(held.size() == 10);
  REQUIRE(held.images[0].data == all.images[40].data);

  std::vector<double> means = channel_means(train);
  subtract_channel_means(train, means);
  std::vector<double> after = channel_means(train);
  for (double m : after) CHECK(std::abs(m) <= 1e-12);
}

TEST_CASE("checkpoint: bit-exact round trip and the size identity") {
  const fs::path dir = scratch_dir();
  std::mt19937_64 rng(123);
  NetworkSpec spec = testutil::micro_network(rng);
  spec.channel_means = {0.25, -0.1};
  const fs::path path = dir / "net.simn";
  save_checkpoint(spec, path.string());
  NetworkSpec back = load_checkpoint(path.string());
  REQUIRE(back.stages.size() == spec.stages.size());
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    REQUIRE(back.stages[s].block.filters.data == spec.stages[s].block.filters.data);
    REQUIRE(back.stages[s].block.sim.templates.data == spec.stages[s].block.sim.templates.data);
    REQUIRE(back.stages[s].block.sim.weights.data == spec.stages[s].block.sim.weights.data);
    REQUIRE(back.stages[s].block.sim.order_p == spec.stages[s].block.sim.order_p);
  }
  REQUIRE(back.offsets.data == spec.offsets.data);
  REQUIRE(back.channel_means == spec.channel_means);

  const std::size_t size = fs::file_size(path);
  CHECK(size == checkpoint_overhead_bytes(spec) + checkpoint_param_bytes(spec));

  // Cross-check against the flop accountant's parameter count.
  CostReport report = count_costs(spec, 6, 6, 2, CostModel{});
  CHECK(checkpoint_param_bytes(spec) == 8 * report.total_params);
}

TEST_CASE("checkpoint corruption and version mismatch are rejected") {
  const fs::path dir = scratch_dir();
  std::mt19937_64 rng(42);
  NetworkSpec spec = testutil::micro_network(rng);
  const fs::path path = dir / "net2.simn";
  save_checkpoint(spec, path.string());

  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  in.close();

  std::vector<unsigned char> flipped = bytes;
  flipped[2] = 'X';
  const fs::path bad = dir / "bad.simn";
  write_bytes(bad, flipped);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), doctest::Contains("magic"),
                       std::runtime_error);

  std::vector<unsigned char> version = bytes;
  version[4] = 9;
  write_bytes(bad, version);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), doctest::Contains("version"),
                       std::runtime_error);

  std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + bytes.size() * 2 / 3);
  write_bytes(bad, cut);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad.string()), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("selfcheck serialization suite passes") {
  CheckResult r = check_serialization(10);
  CHECK(r.pass);
}

TEST_CASE("config: parse, serialize, round trip, unknown keys rejected") {
  const std::string text = R"(# sample run
[data]
format = synthetic
kind = stripes
count = 400
classes = 2
holdout = 100
center = true
seed = 11

[network]
similarity = lp
weighted = true
order_p = 2
beta_class = 1.5
beta_global = 0.75
layer1.field = 5
layer1.stride = 2
layer1.whiten = 8
layer1.channels = 8
layer1.pool_window = 3
layer1.pool_stride = 2
layer1.pool_beta = 60
layer2.field = 3
layer2.whiten = 12
layer2.channels = 16

[train]
batch_size = 25
momentum = 0.9
weight_decay = 0.0001
lr = 0.05
lr_steps = 30:0.1,40:0.1
epochs = 50
noise_std = 0
seed = 7
augmentation = none

[pretrain]
patches = 20000
images = 500
mode = pca
shape = fixed
shape_value = 2
iters = 60
)";
  RunConfig cfg = parse_config(text);
  CHECK(cfg.data.holdout == 100);
  CHECK(cfg.network.layers.size() == 2);
  CHECK(cfg.network.layers[0].whiten == 8);
  CHECK(cfg.network.layers[1].field == 3);
  CHECK(cfg.train.lr_steps.size() == 2);
  CHECK(cfg.train.lr_steps[1].epoch == 40);

  // Round trip through the canonical serialization.
  const std::string canon = serialize_config(cfg);
  RunConfig again = parse_config(canon);
  CHECK(serialize_config(again) == canon);

  CHECK_THROWS_WITH_AS(parse_config("[data]\nbogus = 1\n"), doctest::Contains("unknown key"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[nope]\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("key = 1\n"), std::invalid_argument);

  // The configured network builds and validates on CIFAR-shaped input.
  NetworkSpec spec = build_network(cfg, 32, 32, 3, 1);
  validate_network(spec, 32, 32, 3);
  CHECK(spec.stages.size() == 2);
  CHECK(spec.stages[0].block.filters.rows == 8);
  CHECK(spec.stages[0].block.filters.cols == 75);
  CHECK(spec.offsets.rows == 2);
  CHECK(spec.offsets.cols == 16);
}

TEST_CASE("synthetic data loads through the config layer") {
  RunConfig cfg;
  cfg.data.format = "synthetic";
  cfg.data.kind = "separable2d";
  cfg.data.count = 64;
  cfg.data.seed = 4;
  Dataset data = load_train_data(cfg.data);
  CHECK(data.size() == 64);
  CHECK_THROWS_AS(load_test_data(cfg.data), std::invalid_argument);
  cfg.data.kind = "unknown";
  CHECK_THROWS_AS(load_train_data(cfg.data), std::invalid_argument);
}
