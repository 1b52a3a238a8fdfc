#include "simnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "simnet/rng.hpp"
#include "simnet/similarity.hpp"

namespace simnet {

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument("train config: momentum must lie in [0, 1)");
  }
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train config: rate must be > 0");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("train config: negative weight decay");
  if (cfg.noise_std < 0.0) throw std::invalid_argument("train config: negative noise std");
  if (cfg.total_epochs < 1) throw std::invalid_argument("train config: needs >= 1 epoch");
  for (const LrStep& s : cfg.lr_steps) {
    if (!(s.multiplier > 0.0)) throw std::invalid_argument("train config: rate multiplier <= 0");
  }
}

SoftmaxResult softmax_loss(std::span<const double> scores, int label) {
  const int k = static_cast<int>(scores.size());
  if (label < 0 || label >= k) {
    throw std::invalid_argument("softmax_loss: label " + std::to_string(label) +
                                " out of range for " + std::to_string(k) + " classes");
  }
  double m = scores[0];
  for (double s : scores) m = std::max(m, s);
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - m);
  SoftmaxResult out;
  out.loss = m + std::log(sum) - scores[label];
  out.grad.resize(k);
  for (int r = 0; r < k; ++r) out.grad[r] = std::exp(scores[r] - m) / sum;
  out.grad[label] -= 1.0;
  return out;
}

OptimizerState make_optimizer(const std::vector<ParamGroup>& params, const TrainConfig& cfg) {
  OptimizerState state;
  state.momentum = cfg.momentum;
  state.weight_decay = cfg.weight_decay;
  state.velocity.resize(params.size());
  for (std::size_t g = 0; g < params.size(); ++g) {
    state.velocity[g].assign(params[g].values.size(), 0.0);
  }
  return state;
}

void nesterov_step(std::vector<ParamGroup>& params, const std::vector<ParamGroup>& grads,
                   OptimizerState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw std::invalid_argument("nesterov_step: group count mismatch");
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    ParamGroup& p = params[g];
    const ParamGroup& dg = grads[g];
    std::vector<double>& vel = state.velocity[g];
    if (p.values.size() != dg.values.size() || p.values.size() != vel.size()) {
      throw std::invalid_argument("nesterov_step: shape mismatch in group " + p.name);
    }
    const bool decayed = p.kind == 'W' || p.kind == 'z' || p.kind == 'u';
    const double wd = decayed ? state.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      double& theta = *p.values[i];
      const double d = *dg.values[i] + wd * theta;
      const double v = state.momentum * vel[i] - lr * d;
      vel[i] = v;
      theta += state.momentum * v - lr * d;
      if (p.kind == 'u' && theta < kWeightMin) theta = kWeightMin;
      if (p.kind == 'p' && theta < kOrderPMin) theta = kOrderPMin;
    }
  }
  ++state.step_count;
}

Tensor3 apply_multiplicative_noise(const Tensor3& activations, double std_dev, bool training,
                                   std::mt19937_64& rng) {
  if (std_dev < 0.0) throw std::invalid_argument("noise: negative std");
  if (!training || std_dev == 0.0) return activations;
  std::normal_distribution<double> factor(1.0, std_dev);
  Tensor3 out = activations;
  for (double& v : out.data) v *= factor(rng);
  return out;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (const LrStep& s : cfg.lr_steps) {
    if (epoch >= s.epoch) lr *= s.multiplier;
  }
  return lr;
}

std::string EpochMetrics::tsv_line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d\t%.12g\t%.6f\t%.6f\t%.12g\t%.3f", epoch, train_loss,
                train_acc, val_acc, lr, wall_seconds);
  return buf;
}

namespace {

Tensor3 preprocess(const Tensor3& img, const NetworkSpec& spec) {
  if (spec.channel_means.empty()) return img;
  if (static_cast<int>(spec.channel_means.size()) != img.channels) {
    throw std::invalid_argument("preprocess: channel means do not match image channels");
  }
  Tensor3 out = img;
  for (int h = 0; h < out.height; ++h) {
    for (int w = 0; w < out.width; ++w) {
      for (int c = 0; c < out.channels; ++c) out.at(h, w, c) -= spec.channel_means[c];
    }
  }
  return out;
}

Tensor3 hflip(const Tensor3& img) {
  Tensor3 out(img.height, img.width, img.channels);
  for (int h = 0; h < img.height; ++h) {
    for (int w = 0; w < img.width; ++w) {
      for (int c = 0; c < img.channels; ++c) out.at(h, w, c) = img.at(h, img.width - 1 - w, c);
    }
  }
  return out;
}

struct StageDims {
  int h = 0, w = 0, c = 0;
};

// Input dims of every stage, for sizing noise tensors.
std::vector<StageDims> stage_input_dims(const NetworkSpec& spec, int h, int w, int c) {
  std::vector<StageDims> dims;
  for (const LayerStage& stage : spec.stages) {
    dims.push_back({h, w, c});
    h = stage.block.geom.out_h(h);
    w = stage.block.geom.out_w(w);
    c = stage.block.sim.num_templates();
    if (stage.pool) {
      if (stage.pool->global) {
        h = w = 1;
      } else {
        h = (h - stage.pool->window_h) / stage.pool->stride_h + 1;
        w = (w - stage.pool->window_w) / stage.pool->stride_w + 1;
      }
    }
  }
  return dims;
}

std::string first_non_finite_stage(const ForwardTrace& trace) {
  auto finite = [](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < trace.stages.size(); ++i) {
    if (!finite(trace.stages[i].whitened.data)) {
      return "stage " + std::to_string(i + 1) + " (whitening output)";
    }
    if (!finite(trace.stages[i].simmap.data)) {
      return "stage " + std::to_string(i + 1) + " (similarity map)";
    }
    if (!finite(trace.stages[i].pooled.data)) {
      return "stage " + std::to_string(i + 1) + " (pooled map)";
    }
  }
  return "classification head";
}

}  // namespace

EvalResult evaluate(const Dataset& data, const NetworkSpec& spec) {
  if (data.images.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const int n = static_cast<int>(data.size());
  std::vector<double> losses(n, 0.0);
  std::vector<char> correct(n, 0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const std::vector<double> scores = network_forward(preprocess(data.images[i], spec), spec);
    losses[i] = softmax_loss(scores, data.labels[i]).loss;
    correct[i] = argmax_lowest(scores) == data.labels[i] ? 1 : 0;
  }
  EvalResult out;
  for (int i = 0; i < n; ++i) {
    out.mean_loss += losses[i];
    out.accuracy += correct[i];
  }
  out.mean_loss /= n;
  out.accuracy /= n;
  return out;
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, NetworkSpec& spec,
                  const TrainConfig& cfg) {
  validate_config(cfg);
  if (train_set.images.empty()) throw std::invalid_argument("train: empty dataset");
  const Tensor3& probe = train_set.images.front();
  validate_network(spec, probe.height, probe.width, probe.channels);

  const int n = static_cast<int>(train_set.size());
  std::vector<ParamGroup> params = collect_params(spec);
  OptimizerState optimizer = make_optimizer(params, cfg);
  const std::vector<StageDims> noise_dims =
      stage_input_dims(spec, probe.height, probe.width, probe.channels);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg, epoch);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5u + epoch, 0xabcdefu));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    long epoch_correct = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      std::vector<NetworkGrads> sample_grads(count);
      std::vector<double> sample_loss(count, 0.0);
      std::vector<char> sample_correct(count, 0);
      std::vector<std::string> failures(count);

#pragma omp parallel for schedule(static)
      for (int b = 0; b < count; ++b) {
        const int idx = order[start + b];
        try {
          std::mt19937_64 rng(mix_seed(cfg.seed, epoch, static_cast<std::uint64_t>(idx)));
          Tensor3 img = preprocess(train_set.images[idx], spec);
          if (cfg.augmentation == Augmentation::HFlip &&
              std::bernoulli_distribution(0.5)(rng)) {
            img = hflip(img);
          }
          std::vector<Tensor3> noise;
          const std::vector<Tensor3>* noise_ptr = nullptr;
          if (cfg.noise_std > 0.0) {
            noise.reserve(noise_dims.size());
            for (const StageDims& dims : noise_dims) {
              Tensor3 factors(dims.h, dims.w, dims.c, 1.0);
              std::normal_distribution<double> factor(1.0, cfg.noise_std);
              for (double& v : factors.data) v = factor(rng);
              noise.push_back(std::move(factors));
            }
            noise_ptr = &noise;
          }
          ForwardTrace trace = network_forward_traced(img, spec, noise_ptr);
          SoftmaxResult sm = softmax_loss(trace.scores, train_set.labels[idx]);
          if (!std::isfinite(sm.loss)) {
            throw std::runtime_error(std::string("non-finite values in ") +
                                     first_non_finite_stage(trace));
          }
          sample_loss[b] = sm.loss;
          sample_correct[b] = argmax_lowest(trace.scores) == train_set.labels[idx] ? 1 : 0;
          sample_grads[b] = network_backward(spec, trace, sm.grad);
        } catch (const std::exception& e) {
          failures[b] = "training aborted at epoch " + std::to_string(epoch) + ", sample " +
                        std::to_string(idx) + ": " + e.what();
        }
      }

      for (int b = 0; b < count; ++b) {
        if (!failures[b].empty()) throw std::runtime_error(failures[b]);
      }

      // Deterministic reduction in sample order, averaged over the batch.
      NetworkGrads batch = make_grads(spec, probe.height, probe.width, probe.channels);
      for (int b = 0; b < count; ++b) {
        accumulate_grads(batch, sample_grads[b]);
        epoch_loss += sample_loss[b];
        epoch_correct += sample_correct[b];
      }
      scale_grads(batch, 1.0 / count);
      std::vector<ParamGroup> batch_view = collect_grads(spec, batch);
      nesterov_step(params, batch_view, optimizer, lr);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = epoch_loss / n;
    metrics.train_acc = static_cast<double>(epoch_correct) / n;
    metrics.val_acc = val_set.images.empty() ? 0.0 : evaluate(val_set, spec).accuracy;
    metrics.lr = lr;
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(metrics);
  }
  return result;
}

bool GradCheckReport::all_pass() const {
  for (const GradCheckRow& row : rows) {
    if (!row.pass) return false;
  }
  return true;
}

std::string GradCheckReport::to_text() const {
  std::string out;
  char buf[160];
  for (const GradCheckRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-22s max_rel_err %.3e  %s\n", row.group.c_str(),
                  row.max_rel_err, row.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

GradCheckReport grad_check_against(NetworkSpec& spec, NetworkGrads& analytic,
                                   const Tensor3& input, int label, double tolerance) {
  std::vector<ParamGroup> params = collect_params(spec);
  std::vector<ParamGroup> grads = collect_grads(spec, analytic);

  auto loss_at = [&]() {
    return softmax_loss(network_forward(input, spec), label).loss;
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  const double h = 1e-6;
  for (std::size_t g = 0; g < params.size(); ++g) {
    GradCheckRow row;
    row.group = params[g].name;
    for (std::size_t i = 0; i < params[g].values.size(); ++i) {
      double* v = params[g].values[i];
      const double keep = *v;
      *v = keep + h;
      const double up = loss_at();
      *v = keep - h;
      const double dn = loss_at();
      *v = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = *grads[g].values[i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    row.pass = row.max_rel_err <= tolerance;
    report.rows.push_back(std::move(row));
  }
  return report;
}

GradCheckReport grad_check(NetworkSpec& spec, const Tensor3& input, int label, double tolerance) {
  ForwardTrace trace = network_forward_traced(input, spec);
  SoftmaxResult sm = softmax_loss(trace.scores, label);
  NetworkGrads grads = network_backward(spec, trace, sm.grad);
  return grad_check_against(spec, grads, input, label, tolerance);
}

}  // namespace simnet
