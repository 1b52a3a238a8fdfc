#pragma once

// Shared builders for network-level tests.

#include <random>

#include "simnet/network.hpp"

namespace testutil {

inline void fill_random(std::vector<double>& v, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& x : v) x = d(rng);
}

inline simnet::Tensor3 random_tensor(std::mt19937_64& rng, int h, int w, int c, double lo = -1.0,
                                     double hi = 1.0) {
  simnet::Tensor3 t(h, w, c);
  fill_random(t.data, rng, lo, hi);
  return t;
}

inline simnet::Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo = -1.0,
                                    double hi = 1.0) {
  simnet::Matrix m(r, c);
  fill_random(m.data, rng, lo, hi);
  return m;
}

inline simnet::SimilarityLayer random_sim(std::mt19937_64& rng, int n, int d,
                                          simnet::SimilarityKind kind, bool weighted, double p) {
  simnet::SimilarityLayer sim;
  sim.kind = kind;
  sim.weighted = weighted;
  sim.order_p = p;
  sim.templates = random_matrix(rng, n, d);
  if (weighted) sim.weights = random_matrix(rng, n, d, 0.3, 1.8);
  return sim;
}

inline simnet::LayerStage random_stage(std::mt19937_64& rng, int in_c, int field, int stride,
                                       int pad, int d_out, int n, double p,
                                       const simnet::PoolSpec* pool) {
  simnet::LayerStage stage;
  stage.block.geom = simnet::PatchGeometry{field, field, stride, stride, pad};
  stage.block.filters = random_matrix(rng, d_out, field * field * in_c, -0.7, 0.7);
  stage.block.sim = random_sim(rng, n, d_out, simnet::SimilarityKind::Lp, true, p);
  if (pool != nullptr) {
    stage.pool = *pool;
    stage.pool_beta_trainable = true;
  }
  return stage;
}

// Fixed-shape two-stage micro network on 6x6x2 inputs: 3 then 4 similarity
// channels, 2x2 max-like pooling (beta 60) between them, 3 classes.
inline simnet::NetworkSpec micro_network(std::mt19937_64& rng) {
  simnet::NetworkSpec spec;
  simnet::PoolSpec pool{2, 2, 2, 2, 60.0, false};
  spec.stages.push_back(random_stage(rng, 2, 2, 1, 0, 4, 3, 1.7, &pool));
  spec.stages.push_back(random_stage(rng, 3, 1, 1, 0, 4, 4, 2.2, nullptr));
  spec.beta_class = 1.3;
  spec.offsets = random_matrix(rng, 3, 4);
  spec.beta_global = 0.8;
  return spec;
}

}  // namespace testutil
