#pragma once

#include <optional>
#include <span>
#include <vector>

#include "simnet/tensor.hpp"

namespace simnet {

// Below this magnitude of beta the log-mean-exp form is 0/0-conditioned and
// the arithmetic-mean limit is used instead.
inline constexpr double kBetaSwitch = 1e-8;

// MEX unit: a temperature plus optional per-input offsets.
struct MexUnit {
  double beta = 1.0;
  std::optional<std::vector<double>> offsets;
};

struct PoolSpec {
  int window_h = 2;
  int window_w = 2;
  int stride_h = 2;
  int stride_w = 2;
  double beta = 0.0;
  bool global = false;
};

// (1/beta) * log((1/n) * sum exp(beta * v_i)), max-shifted for stability.
// |beta| < kBetaSwitch returns the arithmetic mean. Result is clamped to
// [min(v), max(v)].
double mex(std::span<const double> values, double beta);

double mex_with_offsets(std::span<const double> x, const MexUnit& unit);

// Softmax weights at temperature beta: exp(beta*v_i) / sum_j exp(beta*v_j).
// Uniform 1/n below the beta switch. Entries are non-negative and sum to 1.
void mex_grad(std::span<const double> values, double beta, std::span<double> out);
std::vector<double> mex_grad(std::span<const double> values, double beta);

// d MEX / d beta at the given point: (sum_i s_i v_i - mex) / beta with
// softmax weights s, or variance(v)/2 in the beta -> 0 branch.
double mex_beta_grad(std::span<const double> values, double beta);

// Per channel, each output cell is the MEX of its window. global=true
// reduces each channel to a single cell.
Tensor3 mex_pool(const Tensor3& input, const PoolSpec& spec);

// Distributes upstream cell gradients to window cells by their softmax
// weights; adds the beta sensitivity into *grad_beta when non-null.
void mex_pool_backward(const Tensor3& input, const PoolSpec& spec, const Tensor3& upstream,
                       Tensor3& grad_input, double* grad_beta);

}  // namespace simnet
