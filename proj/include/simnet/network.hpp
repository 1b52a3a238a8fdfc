#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simnet/mex.hpp"
#include "simnet/similarity.hpp"
#include "simnet/tensor.hpp"

namespace simnet {

// Similarity layer followed by k MEX output units sharing one beta, each with
// its own offset vector over the n hidden similarities.
struct SimNetMlp {
  SimilarityLayer sim;
  double beta = 1.0;  // classification MEX, beta > 0
  Matrix offsets;     // k x n

  int num_classes() const { return offsets.rows; }
};

// A SimNet MLP slid over patches of a 3D array: per-location classification
// MEX (beta1) followed by global MEX pooling over locations (beta2).
struct MlpConvBlock {
  std::variant<SimilarityLayer, ConvLpSim> stage;
  double beta1 = 1.0;
  Matrix offsets;  // k x n
  double beta2 = 1.0;
};

// One deep-network stage: whitened similarity plus optional MEX pooling.
struct LayerStage {
  ConvLpSim block;
  std::optional<PoolSpec> pool;
  bool filters_trainable = true;
  bool pool_beta_trainable = false;
};

// L conv->lp-sim stages, a per-location classification MEX with per-class
// offsets shared across locations, and a global MEX pool down to k scores.
struct NetworkSpec {
  std::vector<LayerStage> stages;
  double beta_class = 1.0;  // > 0
  Matrix offsets;           // k x n_last
  double beta_global = 1.0;
  std::vector<double> channel_means;  // input preprocessing; empty = none

  int num_classes() const { return offsets.rows; }
};

struct StageTrace {
  Tensor3 input;    // stage input (after multiplicative noise, when applied)
  Tensor3 noise;    // per-element factors; empty when no noise was applied
  Matrix patches;   // locations x d_in
  Matrix whitened;  // locations x d_out
  Tensor3 simmap;   // grid x n
  Tensor3 pooled;   // simmap after optional pooling
};

struct ForwardTrace {
  std::vector<StageTrace> stages;
  Tensor3 final_maps;  // what the classification MEX reads (input itself for a stage-less spec)
  Matrix class_mex;    // locations x k, per-location classification MEX values
  std::vector<double> scores;
};

struct StageGrads {
  Matrix filters;
  Matrix templates;
  Matrix weights;  // empty when unweighted
  double order_p = 0.0;
  double pool_beta = 0.0;
};

struct NetworkGrads {
  std::vector<StageGrads> stages;
  double beta_class = 0.0;
  Matrix offsets;
  double beta_global = 0.0;
  Tensor3 input;  // gradient w.r.t. the (pre-noise) network input
};

int argmax_lowest(std::span<const double> scores);

std::vector<double> mlp_forward(std::span<const double> x, const SimNetMlp& net);
int mlp_predict(std::span<const double> x, const SimNetMlp& net);

std::vector<double> mlpconv_forward(const Tensor3& input, const MlpConvBlock& block);

// Throws std::invalid_argument naming the offending stage when shapes do not
// chain or the classification MEX is malformed (beta <= 0, k < 2).
void validate_network(const NetworkSpec& spec, int in_h, int in_w, int in_c);

std::vector<double> network_forward(const Tensor3& input, const NetworkSpec& spec);

// stage_noise, when given, holds one factor tensor per stage (shaped like the
// stage input) that multiplies the stage input before patch extraction.
ForwardTrace network_forward_traced(const Tensor3& input, const NetworkSpec& spec,
                                    const std::vector<Tensor3>* stage_noise = nullptr);

NetworkGrads make_grads(const NetworkSpec& spec, int in_h, int in_w, int in_c);

void accumulate_grads(NetworkGrads& into, const NetworkGrads& from);
void scale_grads(NetworkGrads& grads, double s);

// Exact reverse-mode gradients for every parameter and the input. The trace
// must come from network_forward_traced on the same spec.
NetworkGrads network_backward(const NetworkSpec& spec, const ForwardTrace& trace,
                              std::span<const double> upstream);

// conv->lp-sim plus optional pooling; the layer-by-layer building block.
Tensor3 forward_through_stage(const Tensor3& input, const LayerStage& stage);

// Flattened view of the learnable parameters, in declaration order. Kind
// tags: 'W' filters, 'z' templates, 'u' weights, 'p' order, 'B' pool beta,
// 'c' classification beta, 'b' offsets, 'g' global beta.
struct ParamGroup {
  std::string name;
  char kind = '?';
  std::vector<double*> values;
};

std::vector<ParamGroup> collect_params(NetworkSpec& spec);
std::vector<ParamGroup> collect_grads(const NetworkSpec& spec, NetworkGrads& grads);

}  // namespace simnet
