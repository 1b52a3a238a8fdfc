#pragma once

#include <span>
#include <vector>

#include "simnet/network.hpp"
#include "simnet/tensor.hpp"

namespace simnet {

// Kernel-machine view of the SimNet MLP. Test-surface only: pins the
// equivalence between MEX-over-similarities and kernel evaluations, and is
// never part of the training path.

enum class KernelKind { Exponential, GeneralizedGaussianWeighted };

struct KernelSpec {
  KernelKind kind = KernelKind::Exponential;
  double beta = 1.0;  // > 0
  Matrix weights;     // n x d, row l pairs with template l (weighted kind only)
  double order_p = 2.0;
};

struct KernelMachine {
  Matrix templates;     // n x d
  Matrix coefficients;  // k x n, alpha_rl > 0
  double beta = 1.0;

  int num_templates() const { return templates.rows; }
};

// Exponent of the kernel: beta * x.z for the exponential kind,
// -beta * sum_l u_i |x_i - z_i|^p for the weighted Generalized Gaussian.
double kernel_log(std::span<const double> x, std::span<const double> z, const KernelSpec& spec,
                  int l = 0);

double kernel_eval(std::span<const double> x, std::span<const double> z, const KernelSpec& spec,
                   int l = 0);

// h_r = (1/beta) ln((1/n) sum_l alpha_rl K(x, z_l)), evaluated in log space.
std::vector<double> machine_output(std::span<const double> x, const KernelMachine& machine,
                                   const KernelSpec& spec);

// The kernel machine equivalent to a SimNet MLP: alpha_rl = exp(beta b_rl).
KernelMachine machine_from_mlp(const SimNetMlp& net);
KernelSpec kernel_spec_from_mlp(const SimNetMlp& net);

// Patch-based kernel form of an MLPConv block; requires beta1 == beta2 (the
// collapsed regime). Must equal mlpconv_forward.
std::vector<double> mlpconv_kernel_equiv(const Tensor3& input, const MlpConvBlock& block);

}  // namespace simnet
