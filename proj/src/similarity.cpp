#include "simnet/similarity.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace simnet {

void validate_layer(const SimilarityLayer& layer) {
  const int n = layer.templates.rows;
  const int d = layer.templates.cols;
  if (n < 1 || d < 1) throw std::invalid_argument("similarity layer: needs >= 1 template");
  if (layer.weighted) {
    if (layer.weights.rows != n || layer.weights.cols != d) {
      throw std::invalid_argument("similarity layer: weights must match templates shape");
    }
    for (double u : layer.weights.data) {
      if (!(u > 0.0)) throw std::invalid_argument("similarity layer: weights must be positive");
    }
  }
  if (layer.kind == SimilarityKind::Lp) {
    if (!(layer.order_p >= kOrderPMin) || !std::isfinite(layer.order_p)) {
      throw std::invalid_argument("similarity layer: order p must be finite and >= " +
                                  std::to_string(kOrderPMin));
    }
  }
}

namespace {

void check_template_index(const SimilarityLayer& layer, int l) {
  if (l < 0 || l >= layer.templates.rows) {
    throw std::invalid_argument("similarity: template index out of range");
  }
}

inline double sim_value(const double* x, const double* z, const double* u, int d,
                        SimilarityKind kind, double p) {
  double acc = 0.0;
  if (kind == SimilarityKind::Linear) {
    if (u != nullptr) {
      for (int i = 0; i < d; ++i) acc += u[i] * x[i] * z[i];
    } else {
      for (int i = 0; i < d; ++i) acc += x[i] * z[i];
    }
  } else {
    if (u != nullptr) {
      for (int i = 0; i < d; ++i) acc -= u[i] * pow_abs(x[i] - z[i], p);
    } else {
      for (int i = 0; i < d; ++i) acc -= pow_abs(x[i] - z[i], p);
    }
  }
  return acc;
}

}  // namespace

double similarity(std::span<const double> x, const SimilarityLayer& layer, int l) {
  validate_layer(layer);
  check_template_index(layer, l);
  if (static_cast<int>(x.size()) != layer.dim()) {
    throw std::invalid_argument("similarity: input dim " + std::to_string(x.size()) +
                                " != template dim " + std::to_string(layer.dim()));
  }
  const double* u = layer.weighted ? layer.weights.row(l) : nullptr;
  return sim_value(x.data(), layer.templates.row(l), u, layer.dim(), layer.kind, layer.order_p);
}

Tensor3 similarity_of_rows(const Matrix& rows, const SimilarityLayer& layer, int out_h,
                           int out_w) {
  const int n = layer.num_templates();
  const int d = layer.dim();
  if (rows.cols != d) {
    throw std::invalid_argument("similarity: patch dim " + std::to_string(rows.cols) +
                                " != template dim " + std::to_string(d));
  }
  Tensor3 out(out_h, out_w, n);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < rows.rows; ++t) {
    const double* x = rows.row(t);
    double* dst = &out.data[static_cast<std::size_t>(t) * n];
    for (int l = 0; l < n; ++l) {
      const double* u = layer.weighted ? layer.weights.row(l) : nullptr;
      dst[l] = sim_value(x, layer.templates.row(l), u, d, layer.kind, layer.order_p);
    }
  }
  return out;
}

Tensor3 similarity_map(const Tensor3& input, const SimilarityLayer& layer) {
  validate_layer(layer);
  const Matrix patches = extract_patches(input, layer.geom);
  return similarity_of_rows(patches, layer, layer.geom.out_h(input.height),
                            layer.geom.out_w(input.width));
}

SimilarityGrads similarity_grads(std::span<const double> x, const SimilarityLayer& layer, int l,
                                 double upstream) {
  validate_layer(layer);
  check_template_index(layer, l);
  const int d = layer.dim();
  if (static_cast<int>(x.size()) != d) {
    throw std::invalid_argument("similarity_grads: input dim mismatch");
  }
  SimilarityGrads g;
  g.x.assign(d, 0.0);
  g.z.assign(d, 0.0);
  if (layer.weighted) g.u.assign(d, 0.0);
  const double* z = layer.templates.row(l);
  const double* u = layer.weighted ? layer.weights.row(l) : nullptr;

  if (layer.kind == SimilarityKind::Linear) {
    for (int i = 0; i < d; ++i) {
      const double ui = u != nullptr ? u[i] : 1.0;
      g.x[i] = upstream * ui * z[i];
      g.z[i] = upstream * ui * x[i];
      if (u != nullptr) g.u[i] = upstream * x[i] * z[i];
    }
    return g;
  }

  const double p = layer.order_p;
  double dp = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = x[i] - z[i];
    const double a = std::abs(diff);
    const double ui = u != nullptr ? u[i] : 1.0;
    if (a > 0.0) {
      const double s = diff > 0 ? 1.0 : -1.0;
      const double slope = ui * p * pow_abs(diff, p - 1.0) * s;
      g.x[i] = upstream * -slope;
      g.z[i] = upstream * slope;
    }
    if (u != nullptr) g.u[i] = upstream * -pow_abs(diff, p);
    if (a > kLogGuard) dp -= ui * pow_abs(diff, p) * std::log(a);
  }
  g.p = upstream * dp;
  return g;
}

void validate_block(const ConvLpSim& block, int in_channels) {
  validate_layer(block.sim);
  if (!block.sim.geom.is_unit()) {
    throw std::invalid_argument("conv_lp_sim: similarity stage must have 1x1 geometry");
  }
  const int d_in = block.geom.field_h * block.geom.field_w * in_channels;
  if (block.filters.cols != d_in) {
    throw std::invalid_argument("conv_lp_sim: filter dim " + std::to_string(block.filters.cols) +
                                " != patch dim " + std::to_string(d_in));
  }
  if (block.filters.rows != block.sim.dim()) {
    throw std::invalid_argument("conv_lp_sim: filter count " + std::to_string(block.filters.rows) +
                                " != similarity template dim " + std::to_string(block.sim.dim()));
  }
}

Matrix transform_rows(const Matrix& patches, const Matrix& filters) {
  if (patches.cols != filters.cols) {
    throw std::invalid_argument("transform_rows: patch dim " + std::to_string(patches.cols) +
                                " != filter dim " + std::to_string(filters.cols));
  }
  Matrix out(patches.rows, filters.rows);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < patches.rows; ++t) {
    const double* x = patches.row(t);
    double* dst = out.row(t);
    for (int r = 0; r < filters.rows; ++r) {
      const double* w = filters.row(r);
      double acc = 0.0;
      for (int i = 0; i < filters.cols; ++i) acc += w[i] * x[i];
      dst[r] = acc;
    }
  }
  return out;
}

Tensor3 conv_lp_sim(const Tensor3& input, const ConvLpSim& block) {
  validate_block(block, input.channels);
  const Matrix patches = extract_patches(input, block.geom);
  const Matrix whitened = transform_rows(patches, block.filters);
  return similarity_of_rows(whitened, block.sim, block.geom.out_h(input.height),
                            block.geom.out_w(input.width));
}

}  // namespace simnet
