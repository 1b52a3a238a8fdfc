#include "simnet/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "simnet/checkpoint.hpp"
#include "simnet/kernel_oracle.hpp"
#include "simnet/mex.hpp"

namespace simnet {

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (double& x : m.data) x = d(rng);
  return m;
}

SimilarityLayer random_sim(std::mt19937_64& rng, int n, int d, SimilarityKind kind, bool weighted,
                           double p) {
  SimilarityLayer sim;
  sim.kind = kind;
  sim.weighted = weighted;
  sim.order_p = p;
  sim.templates = random_matrix(rng, n, d, -1.0, 1.0);
  if (weighted) sim.weights = random_matrix(rng, n, d, 0.3, 1.8);
  return sim;
}

CheckResult fail(const std::string& name, const std::string& detail) {
  return CheckResult{name, false, detail};
}

CheckResult pass(const std::string& name, int trials) {
  return CheckResult{name, true, std::to_string(trials) + " random instances"};
}

}  // namespace

CheckResult check_mex_algebra(int trials) {
  const std::string name = "mex algebra";
  std::mt19937_64 rng(0xA11CE);
  std::uniform_real_distribution<double> betas(-50.0, 50.0);
  std::uniform_int_distribution<int> sizes(1, 8);
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> v = random_vec(rng, sizes(rng), -4.0, 4.0);
    const int n = static_cast<int>(v.size());
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    double b1 = betas(rng), b2 = betas(rng);
    if (b1 > b2) std::swap(b1, b2);
    const double m1 = mex(v, b1), m2 = mex(v, b2);
    if (m1 < lo - 1e-9 || m1 > hi + 1e-9) return fail(name, "bounds violated");
    if (m1 > m2 + 1e-9) return fail(name, "beta monotonicity violated");

    const double t = betas(rng) / 10.0;
    std::vector<double> shifted = v;
    for (double& x : shifted) x += t;
    if (std::abs(mex(shifted, b2) - (m2 + t)) > 1e-9) return fail(name, "translation violated");

    if (b2 > 0 && std::abs(mex(v, b2) - hi) > std::log(static_cast<double>(n)) / b2 + 1e-9) {
      return fail(name, "max bound violated");
    }

    // Collapse a random two-row grid.
    double cb = betas(rng) / 10.0;
    if (std::abs(cb) < 1e-3) cb = 1e-3;
    std::vector<double> row2 = random_vec(rng, sizes(rng), -4.0, 4.0);
    std::vector<double> flat = v;
    flat.insert(flat.end(), row2.begin(), row2.end());
    std::vector<double> tops{mex(v, cb), mex(row2, cb)};
    // The outer MEX weights rows by their element counts; replicate the
    // grid-of-rows form instead when sizes differ.
    if (v.size() == row2.size()) {
      if (std::abs(mex(tops, cb) - mex(flat, cb)) > 1e-9) {
        return fail(name, "collapsing violated");
      }
    }
  }
  return pass(name, trials);
}

CheckResult check_kernel_equivalence(int trials) {
  const std::string name = "kernel equivalence";
  std::mt19937_64 rng(0xBEEF);
  std::uniform_int_distribution<int> dims(1, 8), temps(1, 6), classes(2, 4);
  std::uniform_real_distribution<double> betas(0.2, 2.5), orders(0.5, 3.0);
  for (int trial = 0; trial < trials; ++trial) {
    const int d = dims(rng), n = temps(rng), k = classes(rng);
    SimNetMlp net;
    net.beta = betas(rng);
    net.offsets = random_matrix(rng, k, n, -1.0, 1.0);
    if (trial % 2 == 0) {
      net.sim = random_sim(rng, n, d, SimilarityKind::Lp, trial % 4 == 0, orders(rng));
    } else {
      net.sim = random_sim(rng, n, d, SimilarityKind::Linear, false, 2.0);
    }
    std::vector<double> x = random_vec(rng, d, -1.5, 1.5);
    std::vector<double> h = machine_output(x, machine_from_mlp(net), kernel_spec_from_mlp(net));
    std::vector<double> want = mlp_forward(x, net);
    for (int r = 0; r < k; ++r) {
      if (std::abs(h[r] - want[r]) > 1e-9) {
        return fail(name, "machine_output != mlp_forward");
      }
    }

    // RBF / Laplacian reductions with unit weights.
    KernelSpec spec;
    spec.kind = KernelKind::GeneralizedGaussianWeighted;
    spec.beta = betas(rng);
    spec.weights = Matrix(1, d, 1.0);
    std::vector<double> a = random_vec(rng, d, -1.5, 1.5), b = random_vec(rng, d, -1.5, 1.5);
    spec.order_p = 2.0;
    double sq = 0.0, l1 = 0.0;
    for (int i = 0; i < d; ++i) {
      sq += (a[i] - b[i]) * (a[i] - b[i]);
      l1 += std::abs(a[i] - b[i]);
    }
    if (std::abs(kernel_eval(a, b, spec, 0) - std::exp(-spec.beta * sq)) > 1e-12) {
      return fail(name, "RBF reduction violated");
    }
    spec.order_p = 1.0;
    if (std::abs(kernel_eval(a, b, spec, 0) - std::exp(-spec.beta * l1)) > 1e-12) {
      return fail(name, "Laplacian reduction violated");
    }
  }
  return pass(name, trials);
}

CheckResult check_mlpconv_collapse(int trials) {
  const std::string name = "mlpconv collapse";
  std::mt19937_64 rng(0xC0FFEE);
  std::uniform_real_distribution<double> betas(-3.0, 3.0);
  std::uniform_real_distribution<double> vals(-1.0, 1.0);
  for (int trial = 0; trial < trials; ++trial) {
    double beta = betas(rng);
    if (std::abs(beta) < 1e-3) beta = 0.5;
    SimilarityLayer sim = random_sim(rng, 3, 2 * 2 * 2, SimilarityKind::Lp, true, 1.8);
    sim.geom = PatchGeometry{2, 2, 1, 1, 0};
    MlpConvBlock block{sim, beta, random_matrix(rng, 2, 3, -1.0, 1.0), beta};
    Tensor3 in(4, 3, 2);
    for (double& v : in.data) v = vals(rng);
    std::vector<double> got = mlpconv_forward(in, block);

    Tensor3 maps = similarity_map(in, sim);
    const int locations = maps.height * maps.width;
    for (int r = 0; r < 2; ++r) {
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(locations) * 3);
      for (int t = 0; t < locations; ++t) {
        for (int l = 0; l < 3; ++l) {
          flat.push_back(maps.data[static_cast<std::size_t>(t) * 3 + l] + block.offsets.at(r, l));
        }
      }
      if (std::abs(got[r] - mex(flat, beta)) > 1e-9) {
        return fail(name, "collapse identity violated");
      }
    }
  }
  return pass(name, trials);
}

CheckResult check_serialization(int trials) {
  const std::string name = "checkpoint round trip";
  std::mt19937_64 rng(0xD15C);
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "simnet_selfcheck";
  fs::create_directories(dir);
  const std::string path = (dir / "roundtrip.simn").string();
  std::uniform_int_distribution<int> temps(1, 5), douts(1, 4), classes(2, 4), fields(1, 2);
  for (int trial = 0; trial < trials; ++trial) {
    NetworkSpec spec;
    const int stages = 1 + trial % 2;
    int c = 1 + trial % 3;
    const int in_c = c;
    for (int s = 0; s < stages; ++s) {
      LayerStage stage;
      const int f = fields(rng);
      stage.block.geom = PatchGeometry{f, f, 1, 1, 0};
      const int d_out = douts(rng);
      stage.block.filters = random_matrix(rng, d_out, f * f * c, -1.0, 1.0);
      stage.block.sim = random_sim(rng, temps(rng), d_out, SimilarityKind::Lp, trial % 3 != 0,
                                   0.5 + 0.5 * (trial % 5));
      if (trial % 4 == 0) {
        stage.pool = PoolSpec{2, 2, 2, 2, 30.0 + trial, false};
        stage.pool_beta_trainable = trial % 8 == 0;
      }
      c = stage.block.sim.num_templates();
      spec.stages.push_back(std::move(stage));
    }
    spec.beta_class = 0.5 + 0.1 * (trial % 7);
    spec.offsets = random_matrix(rng, classes(rng), c, -1.0, 1.0);
    spec.beta_global = 0.3 + 0.2 * (trial % 5);
    if (trial % 5 == 0) {
      spec.channel_means.assign(in_c, 0.0);
      for (double& m : spec.channel_means) m = rng() % 100 / 100.0;
    }

    save_checkpoint(spec, path);
    NetworkSpec loaded = load_checkpoint(path);
    bool same = loaded.stages.size() == spec.stages.size() &&
                loaded.offsets.data == spec.offsets.data &&
                loaded.beta_class == spec.beta_class &&
                loaded.beta_global == spec.beta_global &&
                loaded.channel_means == spec.channel_means;
    for (std::size_t s = 0; same && s < spec.stages.size(); ++s) {
      same = loaded.stages[s].block.filters.data == spec.stages[s].block.filters.data &&
             loaded.stages[s].block.sim.templates.data ==
                 spec.stages[s].block.sim.templates.data &&
             loaded.stages[s].block.sim.weights.data == spec.stages[s].block.sim.weights.data &&
             loaded.stages[s].block.sim.order_p == spec.stages[s].block.sim.order_p &&
             loaded.stages[s].block.sim.weighted == spec.stages[s].block.sim.weighted &&
             loaded.stages[s].filters_trainable == spec.stages[s].filters_trainable &&
             loaded.stages[s].pool.has_value() == spec.stages[s].pool.has_value();
      if (same && spec.stages[s].pool) {
        same = loaded.stages[s].pool->beta == spec.stages[s].pool->beta;
      }
    }
    if (!same) return fail(name, "round trip altered parameters");

    // Size identity: file = overhead + 8 * params.
    const std::size_t file_size = fs::file_size(path);
    if (file_size != checkpoint_overhead_bytes(spec) + checkpoint_param_bytes(spec)) {
      return fail(name, "size identity violated");
    }

    // Corruption: flip the magic.
    std::vector<char> bytes(file_size);
    {
      std::ifstream in(path, std::ios::binary);
      in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    bytes[0] = 'X';
    const std::string bad = (dir / "corrupt.simn").string();
    {
      std::ofstream out(bad, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    bool rejected = false;
    try {
      load_checkpoint(bad);
    } catch (const std::exception&) {
      rejected = true;
    }
    if (!rejected) return fail(name, "corrupted magic accepted");

    // Truncation.
    {
      std::ofstream out(bad, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    rejected = false;
    try {
      load_checkpoint(bad);
    } catch (const std::exception&) {
      rejected = true;
    }
    if (!rejected) return fail(name, "truncated checkpoint accepted");
  }
  return pass(name, trials);
}

std::vector<CheckResult> run_all_selfchecks() {
  return {check_mex_algebra(), check_kernel_equivalence(), check_mlpconv_collapse(),
          check_serialization()};
}

NetworkSpec gradcheck_network() {
  std::mt19937_64 rng(31337);
  NetworkSpec spec;

  LayerStage l1;
  l1.block.geom = PatchGeometry{2, 2, 1, 1, 0};
  l1.block.filters = random_matrix(rng, 4, 2 * 2 * 2, -0.7, 0.7);
  l1.block.sim = random_sim(rng, 3, 4, SimilarityKind::Lp, true, 1.7);
  l1.pool = PoolSpec{2, 2, 2, 2, 60.0, false};
  l1.pool_beta_trainable = true;
  spec.stages.push_back(l1);

  LayerStage l2;
  l2.block.geom = PatchGeometry{1, 1, 1, 1, 0};
  l2.block.filters = random_matrix(rng, 4, 3, -0.7, 0.7);
  l2.block.sim = random_sim(rng, 4, 4, SimilarityKind::Lp, true, 2.2);
  spec.stages.push_back(l2);

  spec.beta_class = 1.3;
  spec.offsets = random_matrix(rng, 3, 4, -1.0, 1.0);
  spec.beta_global = 0.8;
  return spec;
}

Tensor3 gradcheck_input() {
  std::mt19937_64 rng(31337 ^ 0x77);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor3 in(6, 6, 2);
  for (double& v : in.data) v = d(rng);
  return in;
}

}  // namespace simnet
