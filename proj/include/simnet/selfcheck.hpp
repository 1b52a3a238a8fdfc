#pragma once

#include <string>
#include <vector>

#include "simnet/network.hpp"

namespace simnet {

// Built-in property suites, runnable from the CLI without any data files.
// Each check pins its own tolerances.

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// MEX algebra over random instances: bounds, monotonicity in beta,
// collapsing, translation, and the max-approach bound ln(n)/beta.
CheckResult check_mex_algebra(int trials = 1000);

// machine_output == mlp_forward for both similarity kinds (abs 1e-9), plus
// the RBF / Laplacian reductions of the weighted kernel (abs 1e-12).
CheckResult check_kernel_equivalence(int trials = 200);

// mlpconv_forward equals the flat joint MEX when beta1 == beta2 (abs 1e-9).
CheckResult check_mlpconv_collapse(int trials = 100);

// Bit-exact checkpoint round trips over random specs; corrupted magic and
// truncated payloads are rejected.
CheckResult check_serialization(int trials = 50);

std::vector<CheckResult> run_all_selfchecks();

// The fixed micro network behind the gradcheck command: two conv->lp-sim
// stages on 6x6x2 inputs with a beta-60 pooling stage, three classes.
NetworkSpec gradcheck_network();
Tensor3 gradcheck_input();
inline constexpr int kGradcheckLabel = 1;

}  // namespace simnet
