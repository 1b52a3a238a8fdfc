#include "simnet/mex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace simnet {

namespace {

void check_values(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mex: empty input");
  require_finite(values, "mex");
}

struct PoolGrid {
  int oh, ow, wh, ww, sh, sw;
};

PoolGrid pool_grid(const Tensor3& input, const PoolSpec& spec) {
  if (spec.global) {
    return {1, 1, input.height, input.width, 1, 1};
  }
  if (spec.window_h < 1 || spec.window_w < 1 || spec.stride_h < 1 || spec.stride_w < 1) {
    throw std::invalid_argument("mex_pool: window/stride must be >= 1");
  }
  const int oh = (input.height - spec.window_h) / spec.stride_h + 1;
  const int ow = (input.width - spec.window_w) / spec.stride_w + 1;
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("mex_pool: " + std::to_string(spec.window_h) + "x" +
                                std::to_string(spec.window_w) + " window exceeds " +
                                std::to_string(input.height) + "x" + std::to_string(input.width) +
                                " input");
  }
  return {oh, ow, spec.window_h, spec.window_w, spec.stride_h, spec.stride_w};
}

}  // namespace

double mex(std::span<const double> values, double beta) {
  check_values(values);
  const std::size_t n = values.size();
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (std::abs(beta) < kBetaSwitch) {
    double s = 0.0;
    for (double v : values) s += v;
    return std::clamp(s / static_cast<double>(n), lo, hi);
  }
  // Max-shift: the largest exponent becomes 0.
  const double m = beta > 0 ? beta * hi : beta * lo;
  double s = 0.0;
  for (double v : values) s += std::exp(beta * v - m);
  const double r = (m + std::log(s / static_cast<double>(n))) / beta;
  return std::clamp(r, lo, hi);
}

double mex_with_offsets(std::span<const double> x, const MexUnit& unit) {
  if (!unit.offsets) return mex(x, unit.beta);
  const std::vector<double>& b = *unit.offsets;
  if (b.size() != x.size()) {
    throw std::invalid_argument("mex_with_offsets: offsets length " + std::to_string(b.size()) +
                                " != input length " + std::to_string(x.size()));
  }
  std::vector<double> shifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + b[i];
  return mex(shifted, unit.beta);
}

void mex_grad(std::span<const double> values, double beta, std::span<double> out) {
  check_values(values);
  if (out.size() != values.size()) throw std::invalid_argument("mex_grad: output size mismatch");
  const std::size_t n = values.size();
  if (std::abs(beta) < kBetaSwitch) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n));
    return;
  }
  double m = beta * values[0];
  for (double v : values) m = std::max(m, beta * v);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(beta * values[i] - m);
    s += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= s;
}

std::vector<double> mex_grad(std::span<const double> values, double beta) {
  std::vector<double> out(values.size());
  mex_grad(values, beta, out);
  return out;
}

double mex_beta_grad(std::span<const double> values, double beta) {
  check_values(values);
  const std::size_t n = values.size();
  if (std::abs(beta) < kBetaSwitch) {
    // Second-order Taylor of MEX around beta = 0: mean + beta * var / 2.
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    return var / 2.0;
  }
  std::vector<double> w = mex_grad(values, beta);
  double avg = 0.0;
  for (std::size_t i = 0; i < n; ++i) avg += w[i] * values[i];
  return (avg - mex(values, beta)) / beta;
}

Tensor3 mex_pool(const Tensor3& input, const PoolSpec& spec) {
  const PoolGrid g = pool_grid(input, spec);
  const int c = input.channels;
  Tensor3 out(g.oh, g.ow, c);

#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < g.oh * g.ow * c; ++idx) {
    const int ch = idx % c;
    const int t = idx / c;
    const int oi = t / g.ow;
    const int oj = t % g.ow;
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(g.wh) * g.ww);
    for (int fh = 0; fh < g.wh; ++fh) {
      for (int fw = 0; fw < g.ww; ++fw) {
        window.push_back(input.at(oi * g.sh + fh, oj * g.sw + fw, ch));
      }
    }
    out.at(oi, oj, ch) = mex(window, spec.beta);
  }
  return out;
}

void mex_pool_backward(const Tensor3& input, const PoolSpec& spec, const Tensor3& upstream,
                       Tensor3& grad_input, double* grad_beta) {
  const PoolGrid g = pool_grid(input, spec);
  const int c = input.channels;
  if (upstream.height != g.oh || upstream.width != g.ow || upstream.channels != c) {
    throw std::invalid_argument("mex_pool_backward: upstream shape mismatch");
  }
  if (!grad_input.same_shape(input)) {
    throw std::invalid_argument("mex_pool_backward: grad_input shape mismatch");
  }
  std::vector<double> window, weights;
  for (int oi = 0; oi < g.oh; ++oi) {
    for (int oj = 0; oj < g.ow; ++oj) {
      for (int ch = 0; ch < c; ++ch) {
        window.clear();
        for (int fh = 0; fh < g.wh; ++fh) {
          for (int fw = 0; fw < g.ww; ++fw) {
            window.push_back(input.at(oi * g.sh + fh, oj * g.sw + fw, ch));
          }
        }
        const double up = upstream.at(oi, oj, ch);
        weights.assign(window.size(), 0.0);
        mex_grad(window, spec.beta, weights);
        std::size_t k = 0;
        for (int fh = 0; fh < g.wh; ++fh) {
          for (int fw = 0; fw < g.ww; ++fw) {
            grad_input.at(oi * g.sh + fh, oj * g.sw + fw, ch) += up * weights[k++];
          }
        }
        if (grad_beta != nullptr) *grad_beta += up * mex_beta_grad(window, spec.beta);
      }
    }
  }
}

}  // namespace simnet
