#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "simnet/tensor.hpp"

namespace simnet {

inline constexpr double kOrderPMin = 0.1;   // lower clamp on a learned order p
inline constexpr double kWeightMin = 1e-8;  // positivity floor for weights u
inline constexpr double kLogGuard = 1e-12;  // |x-z| below this contributes 0 to d/dp

enum class SimilarityKind { Linear, Lp };

// Weighted similarity layer: n templates z_l (rows), optional positive
// per-coordinate weights u_l, shared order p for the lp form, and the
// receptive-field geometry its maps are computed over.
struct SimilarityLayer {
  SimilarityKind kind = SimilarityKind::Lp;
  Matrix templates;  // n x d
  Matrix weights;    // n x d, consulted only when weighted
  bool weighted = false;
  double order_p = 2.0;
  PatchGeometry geom;

  int num_templates() const { return templates.rows; }
  int dim() const { return templates.cols; }
};

// Throws std::invalid_argument on malformed layers (weight/template shape
// mismatch, non-positive weights in weighted mode, order out of range).
void validate_layer(const SimilarityLayer& layer);

// linear: sum_i u_i * x_i * z_i;  lp: -sum_i u_i * |x_i - z_i|^p.
double similarity(std::span<const double> x, const SimilarityLayer& layer, int l);

// One output channel per template: out[i,j,l] = similarity(patch_ij, layer, l).
Tensor3 similarity_map(const Tensor3& input, const SimilarityLayer& layer);

struct SimilarityGrads {
  std::vector<double> x;  // d
  std::vector<double> z;  // d
  std::vector<double> u;  // d (empty when unweighted)
  double p = 0.0;         // 0 for linear kind
};

// Analytic gradients of upstream * similarity(x, layer, l) w.r.t. x, z_l,
// u_l and p. The lp kink at x_i = z_i takes subgradient 0.
SimilarityGrads similarity_grads(std::span<const double> x, const SimilarityLayer& layer, int l,
                                 double upstream);

// Whitened lp similarity: a linear layer holding the rows of W followed by a
// similarity layer with trivial 1x1 geometry over the transformed vectors.
struct ConvLpSim {
  PatchGeometry geom;  // patch extraction feeding the linear filters
  Matrix filters;      // d_out x d_in, d_in = field_h * field_w * in_channels
  SimilarityLayer sim; // over d_out inputs; sim.geom must stay 1x1
};

void validate_block(const ConvLpSim& block, int in_channels);

// y_ij = W * x_ij per location, then the similarity map of the y grid.
Tensor3 conv_lp_sim(const Tensor3& input, const ConvLpSim& block);

// Internal kernels shared with the network module; rows are patch vectors.
Matrix transform_rows(const Matrix& patches, const Matrix& filters);
Tensor3 similarity_of_rows(const Matrix& rows, const SimilarityLayer& layer, int out_h, int out_w);

// |a|^p with exact specializations at p = 1 and p = 2.
inline double pow_abs(double a, double p) {
  const double m = a < 0 ? -a : a;
  if (p == 2.0) return m * m;
  if (p == 1.0) return m;
  return std::pow(m, p);
}

}  // namespace simnet
