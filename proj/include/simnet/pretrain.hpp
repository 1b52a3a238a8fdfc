#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simnet/network.hpp"
#include "simnet/tensor.hpp"

namespace simnet {

// Log-gamma via the classic Lanczos approximation (g = 7, 9 coefficients).
double lgamma_lanczos(double x);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are returned in descending order with matching columns in
// vectors.
void jacobi_eigen(const Matrix& sym, std::vector<double>& values, Matrix& vectors);

enum class WhitenMode { Pca, Ica };

struct WhiteningModel {
  std::vector<double> mean;       // d_in
  Matrix w;                       // d_out x d_in
  std::vector<double> spectrum;   // covariance eigenvalues, descending

  int retained_dims() const { return w.rows; }
};

// PCA: scale the top-d_out principal axes to unit variance (eigenvalues
// floored at 1e-10). ICA: PCA whitening followed by a fixed-point orthogonal
// rotation (deflation, log-cosh contrast). Either way the transformed
// fitting patches have identity covariance.
WhiteningModel fit_whitening(const Matrix& patches, int d_out, WhitenMode mode);

// Rows of W * (x - mean).
Matrix whiten_rows(const WhiteningModel& model, const Matrix& patches);

// Mixture of Generalized Gaussians with independent coordinates, per-
// component means and scales, and one shared shape.
struct GGMixture {
  std::vector<double> priors;  // n, simplex
  Matrix means;                // n x d
  Matrix scales;               // n x d, > 0
  double shape = 2.0;          // > 0

  int num_components() const { return means.rows; }
  int dim() const { return means.cols; }
};

// Total log density; per-component joint log densities (log P(y and comp l))
// are written to component_joint when non-null.
double ggm_log_density(std::span<const double> y, const GGMixture& mix,
                       std::vector<double>* component_joint = nullptr);

struct EmOptions {
  bool learn_shape = false;
  double shape = 2.0;      // fixed value, or the starting point when learned
  int max_iters = 300;
  double rel_tol = 1e-7;   // stop when LL improvement < rel_tol * |LL|
  std::uint64_t seed = 1;
};

struct EmResult {
  GGMixture mixture;
  std::vector<double> loglik_trace;  // total data log likelihood per iteration
};

EmResult ggm_fit_em(const Matrix& rows, int n_components, const EmOptions& options);

// z = mu, u = alpha^{-shape}, p = shape, b_l = c_l (the component's
// y-independent joint-density constant).
struct InitBundle {
  Matrix templates;
  Matrix weights;
  double order_p = 2.0;
  std::vector<double> biases;
};

InitBundle mixture_to_init(const GGMixture& mix);

struct PretrainOptions {
  int max_patches = 100000;
  int sample_images = 2000;  // training images used for statistics
  WhitenMode mode = WhitenMode::Pca;
  EmOptions em;
  std::uint64_t seed = 1;
};

struct LayerPretrainReport {
  std::vector<double> loglik_trace;
  double shape = 2.0;
  std::vector<double> spectrum;
  WhiteningModel whitening;  // the fitted models, kept for inspection
  GGMixture mixture;
};

struct PretrainReport {
  std::vector<LayerPretrainReport> layers;
  std::string to_text() const;
};

// Layer-by-layer forward sweep: fit whitening into the conv filters, fit a
// GG mixture on whitened patches, install templates/weights/order, fold the
// mixture biases into the classification offsets for the last stage, then
// propagate the sample through the initialized stage. Images must already
// carry any input preprocessing.
PretrainReport pretrain_network(const std::vector<Tensor3>& images, NetworkSpec& spec,
                                const PretrainOptions& options);

}  // namespace simnet
