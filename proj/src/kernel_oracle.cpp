#include "simnet/kernel_oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace simnet {

namespace {

void check_spec(const KernelSpec& spec) {
  if (!(spec.beta > 0.0)) throw std::invalid_argument("kernel: beta must be positive");
  if (spec.kind == KernelKind::GeneralizedGaussianWeighted) {
    for (double u : spec.weights.data) {
      if (!(u > 0.0)) throw std::invalid_argument("kernel: weights must be positive");
    }
  }
}

// Log-sum-exp with its own max shift; kept local so the oracle does not lean
// on the mex implementation it is checking.
double log_sum_exp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double kernel_log(std::span<const double> x, std::span<const double> z, const KernelSpec& spec,
                  int l) {
  check_spec(spec);
  if (x.size() != z.size()) throw std::invalid_argument("kernel: dim mismatch");
  if (spec.kind == KernelKind::Exponential) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * z[i];
    return spec.beta * dot;
  }
  if (l < 0 || l >= spec.weights.rows ||
      spec.weights.cols != static_cast<int>(x.size())) {
    throw std::invalid_argument("kernel: weight row " + std::to_string(l) + " unavailable");
  }
  const double* u = spec.weights.row(l);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += u[i] * std::pow(std::abs(x[i] - z[i]), spec.order_p);
  }
  return -spec.beta * acc;
}

double kernel_eval(std::span<const double> x, std::span<const double> z, const KernelSpec& spec,
                   int l) {
  return std::exp(kernel_log(x, z, spec, l));
}

std::vector<double> machine_output(std::span<const double> x, const KernelMachine& machine,
                                   const KernelSpec& spec) {
  check_spec(spec);
  if (machine.beta != spec.beta) {
    throw std::invalid_argument("kernel machine: machine and kernel betas differ");
  }
  const int n = machine.num_templates();
  const int k = machine.coefficients.rows;
  if (machine.coefficients.cols != n) {
    throw std::invalid_argument("kernel machine: coefficient columns != template count");
  }
  for (double a : machine.coefficients.data) {
    if (!(a > 0.0)) throw std::invalid_argument("kernel machine: coefficients must be positive");
  }
  std::vector<double> logk(n);
  for (int l = 0; l < n; ++l) logk[l] = kernel_log(x, machine.templates.row_span(l), spec, l);
  std::vector<double> h(k);
  std::vector<double> terms(n);
  for (int r = 0; r < k; ++r) {
    for (int l = 0; l < n; ++l) terms[l] = std::log(machine.coefficients.at(r, l)) + logk[l];
    h[r] = (log_sum_exp(terms) - std::log(static_cast<double>(n))) / machine.beta;
  }
  return h;
}

KernelMachine machine_from_mlp(const SimNetMlp& net) {
  KernelMachine machine;
  machine.templates = net.sim.templates;
  machine.beta = net.beta;
  machine.coefficients = Matrix(net.offsets.rows, net.offsets.cols);
  for (std::size_t i = 0; i < net.offsets.data.size(); ++i) {
    machine.coefficients.data[i] = std::exp(net.beta * net.offsets.data[i]);
  }
  return machine;
}

KernelSpec kernel_spec_from_mlp(const SimNetMlp& net) {
  KernelSpec spec;
  spec.beta = net.beta;
  if (net.sim.kind == SimilarityKind::Linear) {
    spec.kind = KernelKind::Exponential;
    if (net.sim.weighted) {
      throw std::invalid_argument("kernel spec: weighted linear similarity folds u into the "
                                  "exponent; scale templates instead");
    }
  } else {
    spec.kind = KernelKind::GeneralizedGaussianWeighted;
    spec.order_p = net.sim.order_p;
    if (net.sim.weighted) {
      spec.weights = net.sim.weights;
    } else {
      spec.weights = Matrix(net.sim.templates.rows, net.sim.templates.cols, 1.0);
    }
  }
  return spec;
}

std::vector<double> mlpconv_kernel_equiv(const Tensor3& input, const MlpConvBlock& block) {
  if (block.beta1 != block.beta2) {
    throw std::invalid_argument("kernel equivalence requires beta1 == beta2");
  }
  const double beta = block.beta1;
  if (!(beta > 0.0)) throw std::invalid_argument("kernel equivalence requires beta > 0");

  const SimilarityLayer& sim = std::holds_alternative<SimilarityLayer>(block.stage)
                                   ? std::get<SimilarityLayer>(block.stage)
                                   : std::get<ConvLpSim>(block.stage).sim;
  const PatchGeometry& geom = std::holds_alternative<SimilarityLayer>(block.stage)
                                  ? std::get<SimilarityLayer>(block.stage).geom
                                  : std::get<ConvLpSim>(block.stage).geom;

  Matrix patches = extract_patches(input, geom);
  Matrix rows;  // patch representations the kernels act on
  if (std::holds_alternative<ConvLpSim>(block.stage)) {
    const Matrix& w = std::get<ConvLpSim>(block.stage).filters;
    rows = Matrix(patches.rows, w.rows);
    for (int t = 0; t < patches.rows; ++t) {
      for (int r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        for (int i = 0; i < w.cols; ++i) acc += w.at(r, i) * patches.at(t, i);
        rows.at(t, r) = acc;
      }
    }
  } else {
    rows = std::move(patches);
  }

  KernelSpec spec;
  spec.beta = beta;
  if (sim.kind == SimilarityKind::Linear) {
    if (sim.weighted) {
      throw std::invalid_argument("kernel equivalence: unweighted linear similarity only");
    }
    spec.kind = KernelKind::Exponential;
  } else {
    spec.kind = KernelKind::GeneralizedGaussianWeighted;
    spec.order_p = sim.order_p;
    spec.weights = sim.weighted ? sim.weights : Matrix(sim.templates.rows, sim.templates.cols, 1.0);
  }

  const int n = sim.num_templates();
  const int k = block.offsets.rows;
  const int effective = n * rows.rows;  // MEX argument count in the collapsed form
  std::vector<double> h(k);
  std::vector<double> terms;
  terms.reserve(effective);
  for (int r = 0; r < k; ++r) {
    terms.clear();
    for (int t = 0; t < rows.rows; ++t) {
      for (int l = 0; l < n; ++l) {
        terms.push_back(beta * block.offsets.at(r, l) +
                        kernel_log(rows.row_span(t), sim.templates.row_span(l), spec, l));
      }
    }
    h[r] = (log_sum_exp(terms) - std::log(static_cast<double>(effective))) / beta;
  }
  return h;
}

}  // namespace simnet
