#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "simnet/dataset.hpp"
#include "simnet/network.hpp"

namespace simnet {

struct LrStep {
  int epoch = 0;         // learning rate is multiplied when this epoch starts
  double multiplier = 0.1;
};

enum class Augmentation { None, HFlip };

struct TrainConfig {
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double learning_rate = 0.01;
  std::vector<LrStep> lr_steps;
  int total_epochs = 10;
  double noise_std = 0.0;  // multiplicative gaussian noise on stage inputs
  std::uint64_t seed = 1;
  Augmentation augmentation = Augmentation::None;
};

void validate_config(const TrainConfig& cfg);

struct SoftmaxResult {
  double loss = 0.0;
  std::vector<double> grad;  // softmax(scores) - onehot(label)
};

SoftmaxResult softmax_loss(std::span<const double> scores, int label);

// Velocity buffers aligned with a collect_params walk of the spec.
struct OptimizerState {
  double momentum = 0.9;
  double weight_decay = 0.0;
  long step_count = 0;
  std::vector<std::vector<double>> velocity;
};

OptimizerState make_optimizer(const std::vector<ParamGroup>& params, const TrainConfig& cfg);

// Sutskever Nesterov update: v <- mu v - lr (g + wd theta);
// theta <- theta + mu v - lr (g + wd theta). Weight decay covers filters,
// templates and weights only; weights are projected back to positive and the
// order p to its floor after the step.
void nesterov_step(std::vector<ParamGroup>& params, const std::vector<ParamGroup>& grads,
                   OptimizerState& state, double lr);

// Training mode: elementwise product with N(1, std^2) draws. Evaluation mode
// passes the input through untouched.
Tensor3 apply_multiplicative_noise(const Tensor3& activations, double std_dev, bool training,
                                   std::mt19937_64& rng);

double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;

  std::string tsv_line() const;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
};

// Mean loss and accuracy without noise; subtracts spec.channel_means first.
struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};
EvalResult evaluate(const Dataset& data, const NetworkSpec& spec);

// Deterministic under cfg.seed: shuffling, noise and augmentation draw from
// per-(seed, epoch, sample) streams. Aborts with the offending stage named
// when the loss turns non-finite.
TrainResult train(const Dataset& train_set, const Dataset& val_set, NetworkSpec& spec,
                  const TrainConfig& cfg);

struct GradCheckRow {
  std::string group;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 1e-4;

  bool all_pass() const;
  std::string to_text() const;
};

// Central finite differences (step 1e-6) of the softmax loss against the
// analytic backward pass; rel-err = |a-f| / max(|a|,|f|,1e-8) per scalar,
// reported as the max over each parameter group. Reports, never throws.
GradCheckReport grad_check(NetworkSpec& spec, const Tensor3& input, int label, double tolerance);

// Same comparison against caller-supplied analytic gradients.
GradCheckReport grad_check_against(NetworkSpec& spec, NetworkGrads& analytic,
                                   const Tensor3& input, int label, double tolerance);

}  // namespace simnet
