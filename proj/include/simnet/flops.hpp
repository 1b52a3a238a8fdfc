#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simnet/network.hpp"

namespace simnet {

// Declared counting convention: 1 FLOP per add/mul/abs/compare, a
// configurable count per exp/log/pow (the transcendental budget). |x|^2 is
// costed as a single multiply since it compiles to one.
struct CostModel {
  std::uint64_t basic = 1;
  std::uint64_t transcendental = 10;
};

struct StageCost {
  std::string name;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

struct CostReport {
  std::vector<StageCost> stages;
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;

  std::string to_text() const;  // aligned table plus the convention note
  std::string to_tsv() const;
};

// Cost of one MEX over m values under the model.
std::uint64_t mex_cost(std::uint64_t m, bool offsets, const CostModel& model);

// Static per-inference counts for a network applied to h x w x c inputs.
CostReport count_costs(const NetworkSpec& spec, int in_h, int in_w, int in_c,
                       const CostModel& model = {});

}  // namespace simnet
