#include "simnet/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace simnet {

int argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax: empty scores");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<double> mlp_forward(std::span<const double> x, const SimNetMlp& net) {
  validate_layer(net.sim);
  const int n = net.sim.num_templates();
  if (net.offsets.cols != n) {
    throw std::invalid_argument("mlp_forward: offsets must have one column per template");
  }
  std::vector<double> sims(n);
  for (int l = 0; l < n; ++l) sims[l] = similarity(x, net.sim, l);
  std::vector<double> h(net.num_classes());
  std::vector<double> shifted(n);
  for (int r = 0; r < net.num_classes(); ++r) {
    for (int l = 0; l < n; ++l) shifted[l] = sims[l] + net.offsets.at(r, l);
    h[r] = mex(shifted, net.beta);
  }
  return h;
}

int mlp_predict(std::span<const double> x, const SimNetMlp& net) {
  return argmax_lowest(mlp_forward(x, net));
}

std::vector<double> mlpconv_forward(const Tensor3& input, const MlpConvBlock& block) {
  Tensor3 maps = std::holds_alternative<SimilarityLayer>(block.stage)
                     ? similarity_map(input, std::get<SimilarityLayer>(block.stage))
                     : conv_lp_sim(input, std::get<ConvLpSim>(block.stage));
  const int n = maps.channels;
  const int locations = maps.height * maps.width;
  if (block.offsets.cols != n) {
    throw std::invalid_argument("mlpconv_forward: offsets must have one column per template");
  }
  const int k = block.offsets.rows;
  std::vector<double> scores(k);
  std::vector<double> shifted(n), inner(locations);
  for (int r = 0; r < k; ++r) {
    for (int t = 0; t < locations; ++t) {
      for (int l = 0; l < n; ++l) {
        shifted[l] = maps.data[static_cast<std::size_t>(t) * n + l] + block.offsets.at(r, l);
      }
      inner[t] = mex(shifted, block.beta1);
    }
    scores[r] = mex(inner, block.beta2);
  }
  return scores;
}

void validate_network(const NetworkSpec& spec, int in_h, int in_w, int in_c) {
  // A stage-less spec is legal: the classification MEX reads the raw input.
  int h = in_h, w = in_w, c = in_c;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const LayerStage& stage = spec.stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + ": ";
    try {
      validate_block(stage.block, c);
      validate_geometry(stage.block.geom, h, w);
      const int oh = stage.block.geom.out_h(h);
      const int ow = stage.block.geom.out_w(w);
      h = oh;
      w = ow;
      c = stage.block.sim.num_templates();
      if (stage.pool) {
        const PoolSpec& p = *stage.pool;
        if (p.global) {
          h = w = 1;
        } else {
          h = (h - p.window_h) / p.stride_h + 1;
          w = (w - p.window_w) / p.stride_w + 1;
          if (h < 1 || w < 1) throw std::invalid_argument("pool window exceeds similarity map");
        }
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  if (spec.offsets.rows < 2) throw std::invalid_argument("network: needs k >= 2 classes");
  if (spec.offsets.cols != c) {
    throw std::invalid_argument("network: classification offsets have " +
                                std::to_string(spec.offsets.cols) + " columns, final maps have " +
                                std::to_string(c) + " channels");
  }
  if (!(spec.beta_class > 0.0)) {
    throw std::invalid_argument("network: classification MEX requires beta > 0");
  }
  if (!spec.channel_means.empty() && static_cast<int>(spec.channel_means.size()) != in_c) {
    throw std::invalid_argument("network: channel means do not match input channels");
  }
}

Tensor3 forward_through_stage(const Tensor3& input, const LayerStage& stage) {
  Tensor3 maps = conv_lp_sim(input, stage.block);
  if (stage.pool) return mex_pool(maps, *stage.pool);
  return maps;
}

ForwardTrace network_forward_traced(const Tensor3& input, const NetworkSpec& spec,
                                    const std::vector<Tensor3>* stage_noise) {
  if (stage_noise != nullptr && stage_noise->size() != spec.stages.size()) {
    throw std::invalid_argument("network forward: noise plan must cover every stage");
  }
  ForwardTrace trace;
  trace.stages.resize(spec.stages.size());
  Tensor3 cur = input;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    StageTrace& st = trace.stages[i];
    const LayerStage& stage = spec.stages[i];
    try {
      if (stage_noise != nullptr && (*stage_noise)[i].size() > 0) {
        st.noise = (*stage_noise)[i];
        cur = hadamard(cur, st.noise);
      }
      st.input = cur;
      st.patches = extract_patches(st.input, stage.block.geom);
      st.whitened = transform_rows(st.patches, stage.block.filters);
      validate_block(stage.block, st.input.channels);
      st.simmap = similarity_of_rows(st.whitened, stage.block.sim,
                                     stage.block.geom.out_h(st.input.height),
                                     stage.block.geom.out_w(st.input.width));
      require_finite(st.simmap.data, "similarity map");
      st.pooled = stage.pool ? mex_pool(st.simmap, *stage.pool) : st.simmap;
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("stage " + std::to_string(i + 1) + ": " + e.what());
    }
    cur = st.pooled;
  }
  trace.final_maps = cur;

  const Tensor3& maps = trace.final_maps;
  const int n = maps.channels;
  const int locations = maps.height * maps.width;
  const int k = spec.offsets.rows;
  if (spec.offsets.cols != n) {
    throw std::invalid_argument("network: classification offsets have " +
                                std::to_string(spec.offsets.cols) + " columns, final maps have " +
                                std::to_string(n) + " channels");
  }
  trace.class_mex = Matrix(locations, k);
  std::vector<double> shifted(n);
  for (int t = 0; t < locations; ++t) {
    for (int r = 0; r < k; ++r) {
      for (int l = 0; l < n; ++l) {
        shifted[l] = maps.data[static_cast<std::size_t>(t) * n + l] + spec.offsets.at(r, l);
      }
      trace.class_mex.at(t, r) = mex(shifted, spec.beta_class);
    }
  }
  trace.scores.resize(k);
  std::vector<double> column(locations);
  for (int r = 0; r < k; ++r) {
    for (int t = 0; t < locations; ++t) column[t] = trace.class_mex.at(t, r);
    trace.scores[r] = mex(column, spec.beta_global);
  }
  return trace;
}

std::vector<double> network_forward(const Tensor3& input, const NetworkSpec& spec) {
  return network_forward_traced(input, spec).scores;
}

NetworkGrads make_grads(const NetworkSpec& spec, int in_h, int in_w, int in_c) {
  NetworkGrads g;
  g.stages.resize(spec.stages.size());
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const ConvLpSim& b = spec.stages[i].block;
    g.stages[i].filters = Matrix(b.filters.rows, b.filters.cols);
    g.stages[i].templates = Matrix(b.sim.templates.rows, b.sim.templates.cols);
    if (b.sim.weighted) g.stages[i].weights = Matrix(b.sim.weights.rows, b.sim.weights.cols);
  }
  g.offsets = Matrix(spec.offsets.rows, spec.offsets.cols);
  g.input = Tensor3(in_h, in_w, in_c);
  return g;
}

namespace {

void add_into(std::vector<double>& into, const std::vector<double>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

}  // namespace

void accumulate_grads(NetworkGrads& into, const NetworkGrads& from) {
  if (into.stages.size() != from.stages.size()) {
    throw std::invalid_argument("accumulate_grads: stage count mismatch");
  }
  for (std::size_t i = 0; i < into.stages.size(); ++i) {
    add_into(into.stages[i].filters.data, from.stages[i].filters.data);
    add_into(into.stages[i].templates.data, from.stages[i].templates.data);
    add_into(into.stages[i].weights.data, from.stages[i].weights.data);
    into.stages[i].order_p += from.stages[i].order_p;
    into.stages[i].pool_beta += from.stages[i].pool_beta;
  }
  add_into(into.offsets.data, from.offsets.data);
  into.beta_class += from.beta_class;
  into.beta_global += from.beta_global;
  add_into(into.input.data, from.input.data);
}

void scale_grads(NetworkGrads& grads, double s) {
  for (StageGrads& sg : grads.stages) {
    for (double& v : sg.filters.data) v *= s;
    for (double& v : sg.templates.data) v *= s;
    for (double& v : sg.weights.data) v *= s;
    sg.order_p *= s;
    sg.pool_beta *= s;
  }
  for (double& v : grads.offsets.data) v *= s;
  grads.beta_class *= s;
  grads.beta_global *= s;
  for (double& v : grads.input.data) v *= s;
}

namespace {

// Accumulates gradients of sum_t,l g_map[t,l] * similarity(row_t, l) into the
// stage parameter grads and returns the gradient w.r.t. the rows.
void similarity_rows_backward(const Matrix& rows, const SimilarityLayer& layer,
                              const Tensor3& g_map, Matrix& g_rows, StageGrads& grads) {
  const int n = layer.num_templates();
  const int d = layer.dim();
  const double p = layer.order_p;
  for (int t = 0; t < rows.rows; ++t) {
    const double* y = rows.row(t);
    double* gy = g_rows.row(t);
    for (int l = 0; l < n; ++l) {
      const double up = g_map.data[static_cast<std::size_t>(t) * n + l];
      if (up == 0.0) continue;
      const double* z = layer.templates.row(l);
      const double* u = layer.weighted ? layer.weights.row(l) : nullptr;
      double* gz = grads.templates.row(l);
      double* gu = layer.weighted ? grads.weights.row(l) : nullptr;
      if (layer.kind == SimilarityKind::Linear) {
        for (int i = 0; i < d; ++i) {
          const double ui = u != nullptr ? u[i] : 1.0;
          gy[i] += up * ui * z[i];
          gz[i] += up * ui * y[i];
          if (gu != nullptr) gu[i] += up * y[i] * z[i];
        }
      } else {
        double dp = 0.0;
        for (int i = 0; i < d; ++i) {
          const double diff = y[i] - z[i];
          const double a = std::abs(diff);
          const double ui = u != nullptr ? u[i] : 1.0;
          if (a > 0.0) {
            const double slope = ui * p * pow_abs(diff, p - 1.0) * (diff > 0 ? 1.0 : -1.0);
            gy[i] -= up * slope;
            gz[i] += up * slope;
            const double apow = pow_abs(diff, p);
            if (gu != nullptr) gu[i] -= up * apow;
            if (a > kLogGuard) dp -= ui * apow * std::log(a);
          }
        }
        grads.order_p += up * dp;
      }
    }
  }
}

}  // namespace

NetworkGrads network_backward(const NetworkSpec& spec, const ForwardTrace& trace,
                              std::span<const double> upstream) {
  if (trace.stages.size() != spec.stages.size() || trace.scores.empty()) {
    throw std::invalid_argument("network_backward: trace does not match spec (run forward first)");
  }
  const int k = spec.offsets.rows;
  if (static_cast<int>(upstream.size()) != k) {
    throw std::invalid_argument("network_backward: upstream size != class count");
  }
  const Tensor3& in0 =
      trace.stages.empty() ? trace.final_maps : trace.stages.front().input;
  NetworkGrads grads = make_grads(spec, in0.height, in0.width, in0.channels);

  // Classification head backward.
  const Tensor3& maps = trace.final_maps;
  const int n = maps.channels;
  const int locations = maps.height * maps.width;
  Tensor3 g_maps(maps.height, maps.width, n);
  {
    std::vector<double> column(locations), wloc(locations), shifted(n), q(n);
    for (int r = 0; r < k; ++r) {
      if (upstream[r] == 0.0) continue;
      for (int t = 0; t < locations; ++t) column[t] = trace.class_mex.at(t, r);
      mex_grad(column, spec.beta_global, wloc);
      grads.beta_global += upstream[r] * mex_beta_grad(column, spec.beta_global);
      for (int t = 0; t < locations; ++t) {
        const double gm = upstream[r] * wloc[t];
        if (gm == 0.0) continue;
        for (int l = 0; l < n; ++l) {
          shifted[l] = maps.data[static_cast<std::size_t>(t) * n + l] + spec.offsets.at(r, l);
        }
        mex_grad(shifted, spec.beta_class, q);
        grads.beta_class += gm * mex_beta_grad(shifted, spec.beta_class);
        for (int l = 0; l < n; ++l) {
          g_maps.data[static_cast<std::size_t>(t) * n + l] += gm * q[l];
          grads.offsets.at(r, l) += gm * q[l];
        }
      }
    }
  }

  if (spec.stages.empty()) {
    grads.input = g_maps;
    return grads;
  }

  // Stage-by-stage backward.
  Tensor3 g_pooled = g_maps;
  for (int i = static_cast<int>(spec.stages.size()) - 1; i >= 0; --i) {
    const LayerStage& stage = spec.stages[i];
    const StageTrace& st = trace.stages[i];
    StageGrads& sg = grads.stages[i];

    Tensor3 g_simmap;
    if (stage.pool) {
      g_simmap = Tensor3(st.simmap.height, st.simmap.width, st.simmap.channels);
      double* gb = stage.pool ? &sg.pool_beta : nullptr;
      mex_pool_backward(st.simmap, *stage.pool, g_pooled, g_simmap, gb);
    } else {
      g_simmap = g_pooled;
    }

    Matrix g_rows(st.whitened.rows, st.whitened.cols);
    similarity_rows_backward(st.whitened, stage.block.sim, g_simmap, g_rows, sg);

    // Linear filter stage: g_W += g_y x^T per location, g_patch = g_y W.
    const Matrix& W = stage.block.filters;
    Matrix g_patches(st.patches.rows, st.patches.cols);
    for (int t = 0; t < st.patches.rows; ++t) {
      const double* x = st.patches.row(t);
      const double* gy = g_rows.row(t);
      double* gp = g_patches.row(t);
      for (int r = 0; r < W.rows; ++r) {
        const double g = gy[r];
        if (g == 0.0) continue;
        const double* wrow = W.row(r);
        double* gw = sg.filters.row(r);
        for (int c = 0; c < W.cols; ++c) {
          gw[c] += g * x[c];
          gp[c] += g * wrow[c];
        }
      }
    }

    Tensor3 g_input(st.input.height, st.input.width, st.input.channels);
    scatter_patches(g_patches, stage.block.geom, g_input);
    if (st.noise.size() > 0) g_input = hadamard(g_input, st.noise);

    if (i == 0) {
      grads.input = g_input;
    } else {
      g_pooled = g_input;
    }
  }
  return grads;
}

namespace {

void push_matrix(std::vector<ParamGroup>& out, const std::string& name, char kind, Matrix& m) {
  ParamGroup g{name, kind, {}};
  g.values.reserve(m.data.size());
  for (double& v : m.data) g.values.push_back(&v);
  out.push_back(std::move(g));
}

void push_scalar(std::vector<ParamGroup>& out, const std::string& name, char kind, double& v) {
  out.push_back(ParamGroup{name, kind, {&v}});
}

}  // namespace

std::vector<ParamGroup> collect_params(NetworkSpec& spec) {
  std::vector<ParamGroup> out;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    LayerStage& layer = spec.stages[i];
    const std::string prefix = "layer" + std::to_string(i + 1) + ".";
    if (layer.filters_trainable) push_matrix(out, prefix + "filters", 'W', layer.block.filters);
    push_matrix(out, prefix + "templates", 'z', layer.block.sim.templates);
    if (layer.block.sim.weighted) push_matrix(out, prefix + "weights", 'u', layer.block.sim.weights);
    if (layer.block.sim.kind == SimilarityKind::Lp) {
      push_scalar(out, prefix + "order_p", 'p', layer.block.sim.order_p);
    }
    if (layer.pool && layer.pool_beta_trainable) {
      push_scalar(out, prefix + "pool_beta", 'B', layer.pool->beta);
    }
  }
  push_scalar(out, "beta_class", 'c', spec.beta_class);
  push_matrix(out, "offsets", 'b', spec.offsets);
  push_scalar(out, "beta_global", 'g', spec.beta_global);
  return out;
}

std::vector<ParamGroup> collect_grads(const NetworkSpec& spec, NetworkGrads& grads) {
  if (grads.stages.size() != spec.stages.size()) {
    throw std::invalid_argument("collect_grads: gradient object does not match spec");
  }
  std::vector<ParamGroup> out;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const LayerStage& layer = spec.stages[i];
    StageGrads& sg = grads.stages[i];
    const std::string prefix = "layer" + std::to_string(i + 1) + ".";
    if (layer.filters_trainable) push_matrix(out, prefix + "filters", 'W', sg.filters);
    push_matrix(out, prefix + "templates", 'z', sg.templates);
    if (layer.block.sim.weighted) push_matrix(out, prefix + "weights", 'u', sg.weights);
    if (layer.block.sim.kind == SimilarityKind::Lp) {
      push_scalar(out, prefix + "order_p", 'p', sg.order_p);
    }
    if (layer.pool && layer.pool_beta_trainable) {
      push_scalar(out, prefix + "pool_beta", 'B', sg.pool_beta);
    }
  }
  push_scalar(out, "beta_class", 'c', grads.beta_class);
  push_matrix(out, "offsets", 'b', grads.offsets);
  push_scalar(out, "beta_global", 'g', grads.beta_global);
  return out;
}

}  // namespace simnet
