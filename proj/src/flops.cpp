#include "simnet/flops.hpp"

#include <cstdio>
#include <stdexcept>

namespace simnet {

namespace {

void check_model(const CostModel& model) {
  if (model.basic < 1 || model.transcendental < 1) {
    throw std::invalid_argument("cost model: all costs must be >= 1");
  }
}

std::uint64_t similarity_value_cost(const SimilarityLayer& sim, const CostModel& m) {
  const std::uint64_t d = static_cast<std::uint64_t>(sim.dim());
  if (sim.kind == SimilarityKind::Linear) {
    std::uint64_t cost = d * m.basic + (d - 1) * m.basic;
    if (sim.weighted) cost += d * m.basic;
    return cost;
  }
  // d subs + d abs + d pow + d mults + (d-1) adds; the square at p = 2 is a
  // plain multiply.
  const std::uint64_t pow_cost = sim.order_p == 2.0 ? m.basic : m.transcendental;
  return d * m.basic + d * m.basic + d * pow_cost + d * m.basic + (d - 1) * m.basic;
}

}  // namespace

std::uint64_t mex_cost(std::uint64_t m, bool offsets, const CostModel& model) {
  std::uint64_t cost = 0;
  if (offsets) cost += m * model.basic;           // shift by the offsets
  cost += m * model.transcendental;               // exps
  cost += (m - 1) * model.basic;                  // sum
  cost += model.transcendental;                   // log
  cost += 2 * model.basic;                        // 1/n scale and 1/beta scale
  return cost;
}

CostReport count_costs(const NetworkSpec& spec, int in_h, int in_w, int in_c,
                       const CostModel& model) {
  check_model(model);
  validate_network(spec, in_h, in_w, in_c);

  CostReport report;
  int h = in_h, w = in_w, c = in_c;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const LayerStage& stage = spec.stages[i];
    const std::string prefix = "layer" + std::to_string(i + 1) + ".";
    const std::uint64_t d_in = static_cast<std::uint64_t>(stage.block.filters.cols);
    const std::uint64_t d_out = static_cast<std::uint64_t>(stage.block.filters.rows);
    const std::uint64_t n = static_cast<std::uint64_t>(stage.block.sim.num_templates());

    const int oh = stage.block.geom.out_h(h);
    const int ow = stage.block.geom.out_w(w);
    const std::uint64_t locations = static_cast<std::uint64_t>(oh) * ow;

    StageCost conv{prefix + "conv", 0, 0};
    conv.flops = locations * d_out * (d_in * model.basic + (d_in - 1) * model.basic);
    conv.params = d_out * d_in;
    report.stages.push_back(conv);

    StageCost sim{prefix + "sim", 0, 0};
    sim.flops = locations * n * similarity_value_cost(stage.block.sim, model);
    sim.params = n * d_out;
    if (stage.block.sim.weighted) sim.params += n * d_out;
    report.stages.push_back(sim);

    h = oh;
    w = ow;
    c = static_cast<int>(n);
    if (stage.pool) {
      const PoolSpec& p = *stage.pool;
      int ph, pw;
      std::uint64_t window;
      if (p.global) {
        ph = pw = 1;
        window = static_cast<std::uint64_t>(h) * w;
      } else {
        ph = (h - p.window_h) / p.stride_h + 1;
        pw = (w - p.window_w) / p.stride_w + 1;
        window = static_cast<std::uint64_t>(p.window_h) * p.window_w;
      }
      StageCost pool{prefix + "pool", 0, 0};
      pool.flops = static_cast<std::uint64_t>(ph) * pw * n * mex_cost(window, false, model);
      report.stages.push_back(pool);
      h = ph;
      w = pw;
    }
  }

  const std::uint64_t locations = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t k = static_cast<std::uint64_t>(spec.offsets.rows);
  const std::uint64_t n_last = static_cast<std::uint64_t>(spec.offsets.cols);

  // Array-valued fields only; the scalar knobs (orders and betas) are not
  // counted as model size.
  StageCost classify{"classifier", 0, 0};
  classify.flops = locations * k * mex_cost(n_last, true, model);
  classify.params = k * n_last;
  report.stages.push_back(classify);

  StageCost global{"global_pool", 0, 0};
  global.flops = k * mex_cost(locations, false, model);
  report.stages.push_back(global);

  for (const StageCost& s : report.stages) {
    report.total_flops += s.flops;
    report.total_params += s.params;
  }
  return report;
}

std::string CostReport::to_text() const {
  std::string out = "stage            flops       params\n";
  char buf[128];
  for (const StageCost& s : stages) {
    std::snprintf(buf, sizeof(buf), "%-14s %11llu %12llu\n", s.name.c_str(),
                  static_cast<unsigned long long>(s.flops),
                  static_cast<unsigned long long>(s.params));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-14s %11llu %12llu\n", "total",
                static_cast<unsigned long long>(total_flops),
                static_cast<unsigned long long>(total_params));
  out += buf;
  out +=
      "convention: 1 FLOP per add/mul/abs/compare, 10 per exp/log/pow\n"
      "(table-driven approximations); |x|^2 is costed as one multiply.\n";
  return out;
}

std::string CostReport::to_tsv() const {
  std::string out = "stage\tflops\tparams\n";
  char buf[128];
  for (const StageCost& s : stages) {
    std::snprintf(buf, sizeof(buf), "%s\t%llu\t%llu\n", s.name.c_str(),
                  static_cast<unsigned long long>(s.flops),
                  static_cast<unsigned long long>(s.params));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "total\t%llu\t%llu\n",
                static_cast<unsigned long long>(total_flops),
                static_cast<unsigned long long>(total_params));
  out += buf;
  return out;
}

}  // namespace simnet
