#include "simnet/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "simnet/similarity.hpp"

namespace simnet {

double lgamma_lanczos(double x) {
  constexpr double kG = 7.0;
  static constexpr double kCoef[9] = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (!(x > 0.0)) throw std::invalid_argument("lgamma: requires x > 0");
  if (x < 0.5) {
    // Reflection formula keeps the series in its accurate range.
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) -
           lgamma_lanczos(1.0 - x);
  }
  const double z = x - 1.0;
  double a = kCoef[0];
  for (int i = 1; i < 9; ++i) a += kCoef[i] / (z + i);
  const double t = z + kG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

void jacobi_eigen(const Matrix& sym, std::vector<double>& values, Matrix& vectors) {
  const int n = sym.rows;
  if (sym.cols != n || n < 1) throw std::invalid_argument("jacobi: matrix must be square");
  Matrix a = sym;
  vectors = Matrix(n, n);
  for (int i = 0; i < n; ++i) vectors.at(i, i) = 1.0;

  double frob2 = 0.0;
  for (double v : a.data) frob2 += v * v;
  const double stop = std::max(frob2, 1e-300) * 1e-30;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off <= stop) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        const double app = a.at(p, p), aqq = a.at(q, q);
        a.at(p, p) = app - t * apq;
        a.at(q, q) = aqq + t * apq;
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i != p && i != q) {
            const double aip = a.at(i, p), aiq = a.at(i, q);
            a.at(i, p) = aip - s * (aiq + tau * aip);
            a.at(p, i) = a.at(i, p);
            a.at(i, q) = aiq + s * (aip - tau * aiq);
            a.at(q, i) = a.at(i, q);
          }
          const double vip = vectors.at(i, p), viq = vectors.at(i, q);
          vectors.at(i, p) = vip - s * (viq + tau * vip);
          vectors.at(i, q) = viq + s * (vip - tau * viq);
        }
      }
    }
  }

  values.resize(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::vector<double> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = a.at(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return diag[x] > diag[y]; });
  Matrix sorted(n, n);
  for (int j = 0; j < n; ++j) {
    values[j] = diag[order[j]];
    for (int i = 0; i < n; ++i) sorted.at(i, j) = vectors.at(i, order[j]);
  }
  vectors = sorted;
}

namespace {

constexpr double kEigFloor = 1e-10;
constexpr double kScaleFloor = 1e-6;

Matrix covariance(const Matrix& centered) {
  const int n = centered.rows, d = centered.cols;
  Matrix cov(d, d);
  for (int t = 0; t < n; ++t) {
    const double* x = centered.row(t);
    for (int i = 0; i < d; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* row = cov.row(i);
      for (int j = i; j < d; ++j) row[j] += xi * x[j];
    }
  }
  const double norm = 1.0 / (n - 1);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      cov.at(i, j) *= norm;
      cov.at(j, i) = cov.at(i, j);
    }
  }
  return cov;
}

// Fixed-point ICA rotation on already-white rows: deflation with the
// log-cosh contrast (g = tanh). Returns an orthonormal d x d matrix.
Matrix ica_rotation(const Matrix& white, std::uint64_t seed) {
  const int n = white.rows, d = white.cols;
  Matrix rot(d, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(d), w_new(d);
  for (int comp = 0; comp < d; ++comp) {
    for (double& v : w) v = gauss(rng);
    for (int iter = 0; iter < 200; ++iter) {
      // w+ = E[y g(w.y)] - E[g'(w.y)] w
      std::fill(w_new.begin(), w_new.end(), 0.0);
      double gprime_sum = 0.0;
      for (int t = 0; t < n; ++t) {
        const double* y = white.row(t);
        double proj = 0.0;
        for (int i = 0; i < d; ++i) proj += w[i] * y[i];
        const double th = std::tanh(proj);
        for (int i = 0; i < d; ++i) w_new[i] += y[i] * th;
        gprime_sum += 1.0 - th * th;
      }
      for (int i = 0; i < d; ++i) w_new[i] = w_new[i] / n - (gprime_sum / n) * w[i];
      // Deflate against earlier components, then normalize.
      for (int prev = 0; prev < comp; ++prev) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += w_new[i] * rot.at(prev, i);
        for (int i = 0; i < d; ++i) w_new[i] -= dot * rot.at(prev, i);
      }
      double norm = 0.0;
      for (double v : w_new) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-12) {
        for (double& v : w_new) v = gauss(rng);
        continue;
      }
      for (double& v : w_new) v /= norm;
      double align = 0.0;
      for (int i = 0; i < d; ++i) align += w_new[i] * w[i];
      w = w_new;
      if (std::abs(1.0 - std::abs(align)) < 1e-6) break;
    }
    for (int i = 0; i < d; ++i) rot.at(comp, i) = w[i];
  }
  return rot;
}

}  // namespace

WhiteningModel fit_whitening(const Matrix& patches, int d_out, WhitenMode mode) {
  const int n = patches.rows, d = patches.cols;
  if (d_out < 1 || d_out > d) {
    throw std::invalid_argument("whitening: d_out must be in [1, patch dim]");
  }
  if (n < d + 1) {
    throw std::invalid_argument("whitening: needs at least dim+1 patches, got " +
                                std::to_string(n));
  }
  require_finite(patches.data, "whitening");

  WhiteningModel model;
  model.mean.assign(d, 0.0);
  for (int t = 0; t < n; ++t) {
    const double* x = patches.row(t);
    for (int i = 0; i < d; ++i) model.mean[i] += x[i];
  }
  for (double& m : model.mean) m /= n;

  Matrix centered = patches;
  for (int t = 0; t < n; ++t) {
    double* x = centered.row(t);
    for (int i = 0; i < d; ++i) x[i] -= model.mean[i];
  }

  std::vector<double> eigvals;
  Matrix eigvecs;
  jacobi_eigen(covariance(centered), eigvals, eigvecs);
  model.spectrum = eigvals;

  model.w = Matrix(d_out, d);
  for (int r = 0; r < d_out; ++r) {
    const double lam = std::max(eigvals[r], kEigFloor);
    const double inv = 1.0 / std::sqrt(lam);
    for (int i = 0; i < d; ++i) model.w.at(r, i) = inv * eigvecs.at(i, r);
  }

  if (mode == WhitenMode::Ica) {
    Matrix white = whiten_rows(model, patches);
    Matrix rot = ica_rotation(white, 0x9e3779b97f4a7c15ull);
    Matrix combined(d_out, d);
    for (int r = 0; r < d_out; ++r) {
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (int m = 0; m < d_out; ++m) acc += rot.at(r, m) * model.w.at(m, i);
        combined.at(r, i) = acc;
      }
    }
    model.w = combined;
  }
  return model;
}

Matrix whiten_rows(const WhiteningModel& model, const Matrix& patches) {
  const int d = static_cast<int>(model.mean.size());
  if (patches.cols != d) throw std::invalid_argument("whiten_rows: dim mismatch");
  Matrix out(patches.rows, model.w.rows);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < patches.rows; ++t) {
    const double* x = patches.row(t);
    double* dst = out.row(t);
    for (int r = 0; r < model.w.rows; ++r) {
      const double* w = model.w.row(r);
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += w[i] * (x[i] - model.mean[i]);
      dst[r] = acc;
    }
  }
  return out;
}

namespace {

void check_mixture(const GGMixture& mix) {
  const int n = mix.num_components(), d = mix.dim();
  if (n < 1 || d < 1) throw std::invalid_argument("mixture: empty");
  if (static_cast<int>(mix.priors.size()) != n ||
      mix.scales.rows != n || mix.scales.cols != d) {
    throw std::invalid_argument("mixture: inconsistent shapes");
  }
  if (!(mix.shape > 0.0)) throw std::invalid_argument("mixture: shape must be positive");
}

// Per-component y-independent constant c_l of the joint log density.
std::vector<double> component_constants(const GGMixture& mix) {
  const int n = mix.num_components(), d = mix.dim();
  const double lg = lgamma_lanczos(1.0 / mix.shape);
  const double per_coord = std::log(mix.shape) - std::log(2.0) - lg;
  std::vector<double> c(n);
  for (int l = 0; l < n; ++l) {
    double acc = std::log(std::max(mix.priors[l], 1e-300)) + d * per_coord;
    for (int t = 0; t < d; ++t) acc -= std::log(mix.scales.at(l, t));
    c[l] = acc;
  }
  return c;
}

double joint_log_density(std::span<const double> y, const GGMixture& mix, int l, double c_l) {
  const int d = mix.dim();
  double acc = c_l;
  for (int t = 0; t < d; ++t) {
    acc -= pow_abs((y[t] - mix.means.at(l, t)) / mix.scales.at(l, t), mix.shape);
  }
  return acc;
}

double lse(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <typename F>
double golden_min(double lo, double hi, int iters, F f) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

}  // namespace

double ggm_log_density(std::span<const double> y, const GGMixture& mix,
                       std::vector<double>* component_joint) {
  check_mixture(mix);
  if (static_cast<int>(y.size()) != mix.dim()) {
    throw std::invalid_argument("ggm_log_density: dim mismatch");
  }
  const std::vector<double> c = component_constants(mix);
  std::vector<double> joints(mix.num_components());
  for (int l = 0; l < mix.num_components(); ++l) joints[l] = joint_log_density(y, mix, l, c[l]);
  const double total = lse(joints);
  if (component_joint != nullptr) *component_joint = std::move(joints);
  return total;
}

namespace {

// Weighted median: smallest v with cumulative weight >= half the total.
double weighted_median(std::vector<std::pair<double, double>>& value_weight) {
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (const auto& [v, w] : value_weight) total += w;
  double cum = 0.0;
  for (const auto& [v, w] : value_weight) {
    cum += w;
    if (cum >= total / 2.0) return v;
  }
  return value_weight.back().first;
}

struct EmState {
  Matrix resp;            // n_rows x n_components
  std::vector<double> row_ll;
};

// E-step; returns total log likelihood under the current mixture.
double em_expectation(const Matrix& rows, const GGMixture& mix, EmState& state) {
  const int n = rows.rows;
  const int k = mix.num_components();
  const std::vector<double> consts = component_constants(mix);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<double> joints(k);
    for (int l = 0; l < k; ++l) {
      joints[l] = joint_log_density(rows.row_span(i), mix, l, consts[l]);
    }
    const double total = lse(joints);
    state.row_ll[i] = total;
    for (int l = 0; l < k; ++l) state.resp.at(i, l) = std::exp(joints[l] - total);
  }
  double ll = 0.0;
  for (double v : state.row_ll) ll += v;
  return ll;
}

double total_log_likelihood(const Matrix& rows, const GGMixture& mix) {
  const int n = rows.rows;
  const int k = mix.num_components();
  const std::vector<double> consts = component_constants(mix);
  std::vector<double> per_row(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<double> joints(k);
    for (int l = 0; l < k; ++l) {
      joints[l] = joint_log_density(rows.row_span(i), mix, l, consts[l]);
    }
    per_row[i] = lse(joints);
  }
  double ll = 0.0;
  for (double v : per_row) ll += v;
  return ll;
}

// Column-wise data bounds, used as the search interval for general-shape
// mean updates.
void column_bounds(const Matrix& rows, std::vector<double>& lo, std::vector<double>& hi) {
  const int d = rows.cols;
  lo.assign(rows.row(0), rows.row(0) + d);
  hi.assign(rows.row(0), rows.row(0) + d);
  for (int i = 1; i < rows.rows; ++i) {
    const double* x = rows.row(i);
    for (int t = 0; t < d; ++t) {
      lo[t] = std::min(lo[t], x[t]);
      hi[t] = std::max(hi[t], x[t]);
    }
  }
}

// k-means++-style seeding: first mean uniform, later means sampled with
// probability proportional to squared distance from the chosen set.
std::vector<int> seed_means(const Matrix& rows, int k, std::mt19937_64& rng) {
  const int n = rows.rows, d = rows.cols;
  std::vector<int> chosen;
  std::uniform_int_distribution<int> uniform(0, n - 1);
  chosen.push_back(uniform(rng));
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < k) {
    const int last = chosen.back();
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = 0; t < d; ++t) {
        const double diff = rows.at(i, t) - rows.at(last, t);
        acc += diff * diff;
      }
      dist2[i] = std::min(dist2[i], acc);
    }
    double total = 0.0;
    for (double v : dist2) total += v;
    if (total <= 0.0) {
      chosen.push_back(uniform(rng));
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double target = pick(rng);
    int idx = n - 1;
    for (int i = 0; i < n; ++i) {
      target -= dist2[i];
      if (target <= 0.0) {
        idx = i;
        break;
      }
    }
    chosen.push_back(idx);
  }
  return chosen;
}

}  // namespace

EmResult ggm_fit_em(const Matrix& rows, int n_components, const EmOptions& options) {
  const int n = rows.rows, d = rows.cols;
  if (n_components < 1) throw std::invalid_argument("em: needs >= 1 component");
  if (n < n_components) throw std::invalid_argument("em: fewer rows than components");
  require_finite(rows.data, "em");

  std::mt19937_64 rng(options.seed);

  // Column statistics for seeding and scale floors.
  std::vector<double> col_mean(d, 0.0), col_std(d, 0.0), col_lo, col_hi;
  for (int i = 0; i < n; ++i) {
    const double* x = rows.row(i);
    for (int t = 0; t < d; ++t) col_mean[t] += x[t];
  }
  for (double& v : col_mean) v /= n;
  for (int i = 0; i < n; ++i) {
    const double* x = rows.row(i);
    for (int t = 0; t < d; ++t) {
      col_std[t] += (x[t] - col_mean[t]) * (x[t] - col_mean[t]);
    }
  }
  for (double& v : col_std) v = std::sqrt(v / std::max(1, n - 1));
  column_bounds(rows, col_lo, col_hi);

  GGMixture mix;
  mix.shape = options.shape;
  mix.priors.assign(n_components, 1.0 / n_components);
  mix.means = Matrix(n_components, d);
  mix.scales = Matrix(n_components, d);
  const std::vector<int> seeds = seed_means(rows, n_components, rng);
  for (int l = 0; l < n_components; ++l) {
    for (int t = 0; t < d; ++t) {
      mix.means.at(l, t) = rows.at(seeds[l], t);
      mix.scales.at(l, t) = std::max(col_std[t], 1e-3);
    }
  }

  EmState state;
  state.resp = Matrix(n, n_components);
  state.row_ll.assign(n, 0.0);

  EmResult result;
  std::vector<int> reseeds(n_components, 0);
  std::uniform_int_distribution<int> uniform_row(0, n - 1);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double ll = em_expectation(rows, mix, state);
    result.loglik_trace.push_back(ll);
    if (iter > 0) {
      const double prev = result.loglik_trace[iter - 1];
      if (std::abs(ll - prev) < options.rel_tol * std::abs(ll)) break;
    }

    // Component totals; re-seed degenerate components.
    std::vector<double> totals(n_components, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < n_components; ++l) totals[l] += state.resp.at(i, l);
    }
    bool reseeded = false;
    for (int l = 0; l < n_components; ++l) {
      if (totals[l] < 1e-8) {
        if (++reseeds[l] > 3) {
          throw std::runtime_error("em: component " + std::to_string(l) +
                                   " degenerate after 3 re-seeds");
        }
        const int row = uniform_row(rng);
        for (int t = 0; t < d; ++t) {
          mix.means.at(l, t) = rows.at(row, t);
          mix.scales.at(l, t) = std::max(col_std[t], 1e-3);
        }
        mix.priors[l] = 1.0 / n_components;
        reseeded = true;
      }
    }
    if (reseeded) {
      double prior_sum = 0.0;
      for (double v : mix.priors) prior_sum += v;
      for (double& v : mix.priors) v /= prior_sum;
      continue;  // fresh E-step next iteration
    }

    // M-step: priors.
    for (int l = 0; l < n_components; ++l) mix.priors[l] = totals[l] / n;

    // Means and scales, coordinate-wise.
    const double beta = mix.shape;
#pragma omp parallel for schedule(static) collapse(2)
    for (int l = 0; l < n_components; ++l) {
      for (int t = 0; t < d; ++t) {
        double mu;
        if (beta == 2.0) {
          double num = 0.0;
          for (int i = 0; i < n; ++i) num += state.resp.at(i, l) * rows.at(i, t);
          mu = num / totals[l];
        } else if (beta == 1.0) {
          std::vector<std::pair<double, double>> vw(n);
          for (int i = 0; i < n; ++i) vw[i] = {rows.at(i, t), state.resp.at(i, l)};
          mu = weighted_median(vw);
        } else {
          auto objective = [&](double m) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += state.resp.at(i, l) * pow_abs(rows.at(i, t) - m, beta);
            return acc;
          };
          mu = golden_min(col_lo[t], col_hi[t], 80, objective);
          // Keep the previous mean when the line search does not improve.
          if (objective(mix.means.at(l, t)) < objective(mu)) mu = mix.means.at(l, t);
        }
        double moment = 0.0;
        for (int i = 0; i < n; ++i) moment += state.resp.at(i, l) * pow_abs(rows.at(i, t) - mu, beta);
        const double alpha = std::pow(beta * moment / totals[l], 1.0 / beta);
        mix.means.at(l, t) = mu;
        mix.scales.at(l, t) = std::max(alpha, kScaleFloor);
      }
    }

    // Shared shape, once per outer iteration, guarded to never lose ground.
    if (options.learn_shape) {
      const double old_shape = mix.shape;
      const double old_ll = total_log_likelihood(rows, mix);
      auto neg_ll = [&](double b) {
        GGMixture probe = mix;
        probe.shape = b;
        return -total_log_likelihood(rows, probe);
      };
      const double candidate = golden_min(0.3, 4.0, 40, neg_ll);
      mix.shape = candidate;
      if (total_log_likelihood(rows, mix) < old_ll) mix.shape = old_shape;
    }
  }

  result.mixture = mix;
  return result;
}

InitBundle mixture_to_init(const GGMixture& mix) {
  check_mixture(mix);
  InitBundle init;
  init.templates = mix.means;
  init.order_p = mix.shape;
  init.weights = Matrix(mix.scales.rows, mix.scales.cols);
  for (std::size_t i = 0; i < mix.scales.data.size(); ++i) {
    init.weights.data[i] = std::pow(mix.scales.data[i], -mix.shape);
  }
  const std::vector<double> c = component_constants(mix);
  init.biases = c;
  return init;
}

namespace {

// Copy one zero-padded window of a tensor into a row buffer.
void copy_window(const Tensor3& img, const PatchGeometry& g, int oi, int oj, double* dst) {
  const int c = img.channels;
  for (int fh = 0; fh < g.field_h; ++fh) {
    for (int fw = 0; fw < g.field_w; ++fw) {
      const int h = oi * g.stride_h - g.pad + fh;
      const int w = oj * g.stride_w - g.pad + fw;
      if (h >= 0 && h < img.height && w >= 0 && w < img.width) {
        const double* src = &img.data[(static_cast<std::size_t>(h) * img.width + w) * c];
        for (int ch = 0; ch < c; ++ch) *dst++ = src[ch];
      } else {
        for (int ch = 0; ch < c; ++ch) *dst++ = 0.0;
      }
    }
  }
}

Matrix sample_patches(const std::vector<Tensor3>& reps, const PatchGeometry& geom, int cap,
                      std::mt19937_64& rng) {
  const int c = reps.front().channels;
  const int d = geom.field_h * geom.field_w * c;
  std::vector<long> grid(reps.size());
  long total = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    validate_geometry(geom, reps[i].height, reps[i].width);
    grid[i] = static_cast<long>(geom.out_h(reps[i].height)) * geom.out_w(reps[i].width);
    total += grid[i];
  }
  if (total <= cap) {
    Matrix out(static_cast<int>(total), d);
    int row = 0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const int ow = geom.out_w(reps[i].width);
      for (long t = 0; t < grid[i]; ++t) {
        copy_window(reps[i], geom, static_cast<int>(t / ow), static_cast<int>(t % ow),
                    out.row(row++));
      }
    }
    return out;
  }
  Matrix out(cap, d);
  std::uniform_int_distribution<std::size_t> pick_img(0, reps.size() - 1);
  for (int row = 0; row < cap; ++row) {
    const std::size_t i = pick_img(rng);
    std::uniform_int_distribution<long> pick_loc(0, grid[i] - 1);
    const long t = pick_loc(rng);
    const int ow = geom.out_w(reps[i].width);
    copy_window(reps[i], geom, static_cast<int>(t / ow), static_cast<int>(t % ow), out.row(row));
  }
  return out;
}

}  // namespace

std::string PretrainReport::to_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerPretrainReport& layer = layers[i];
    os << "layer " << (i + 1) << "\n";
    os << "  shape_p " << layer.shape << "\n";
    os << "  whitening_spectrum";
    for (double v : layer.spectrum) os << ' ' << v;
    os << "\n";
    os << "  loglik_trace";
    for (double v : layer.loglik_trace) os << ' ' << v;
    os << "\n";
  }
  return os.str();
}

PretrainReport pretrain_network(const std::vector<Tensor3>& images, NetworkSpec& spec,
                                const PretrainOptions& options) {
  if (images.empty()) throw std::invalid_argument("pretrain: empty image set");
  std::mt19937_64 rng(options.seed);

  // Deterministic subsample of the training set.
  std::vector<Tensor3> reps;
  if (static_cast<int>(images.size()) <= options.sample_images) {
    reps = images;
  } else {
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    reps.reserve(options.sample_images);
    for (int i = 0; i < options.sample_images; ++i) reps.push_back(images[order[i]]);
  }

  PretrainReport report;
  for (std::size_t si = 0; si < spec.stages.size(); ++si) {
    LayerStage& stage = spec.stages[si];
    try {
      if (stage.block.sim.kind != SimilarityKind::Lp) {
        throw std::invalid_argument("pretraining covers lp similarity stages only");
      }
      Matrix patches = sample_patches(reps, stage.block.geom, options.max_patches, rng);
      const int d_out = stage.block.filters.rows;
      WhiteningModel whitening = fit_whitening(patches, d_out, options.mode);
      Matrix whitened = whiten_rows(whitening, patches);

      EmOptions em = options.em;
      em.seed = options.seed + 0x51ed2701ull * (si + 1);
      EmResult fit = ggm_fit_em(whitened, stage.block.sim.num_templates(), em);
      InitBundle init = mixture_to_init(fit.mixture);

      // Install: the conv computes W x (uncentered), so shift the templates
      // by W mean to keep them aligned with the centered mixture fit.
      stage.block.filters = whitening.w;
      std::vector<double> shift(d_out, 0.0);
      for (int r = 0; r < d_out; ++r) {
        for (std::size_t i = 0; i < whitening.mean.size(); ++i) {
          shift[r] += whitening.w.at(r, static_cast<int>(i)) * whitening.mean[i];
        }
      }
      stage.block.sim.templates = init.templates;
      for (int l = 0; l < init.templates.rows; ++l) {
        for (int r = 0; r < d_out; ++r) stage.block.sim.templates.at(l, r) += shift[r];
      }
      if (stage.block.sim.weighted) {
        stage.block.sim.weights = init.weights;
      }
      stage.block.sim.order_p = std::clamp(init.order_p, kOrderPMin, 1e6);

      // The stage feeding the classification MEX folds the mixture biases
      // into the offsets; interior stages have no offset slot and drop them.
      if (si + 1 == spec.stages.size()) {
        if (spec.offsets.cols != static_cast<int>(init.biases.size())) {
          throw std::invalid_argument("classification offsets do not match final channels");
        }
        for (int r = 0; r < spec.offsets.rows; ++r) {
          for (int l = 0; l < spec.offsets.cols; ++l) {
            spec.offsets.at(r, l) = init.biases[l];
          }
        }
      }

      LayerPretrainReport lr;
      lr.loglik_trace = fit.loglik_trace;
      lr.shape = fit.mixture.shape;
      lr.spectrum = whitening.spectrum;
      lr.whitening = whitening;
      lr.mixture = fit.mixture;
      report.layers.push_back(std::move(lr));

      // Propagate the sample through the initialized stage.
      for (Tensor3& rep : reps) rep = forward_through_stage(rep, stage);
    } catch (const std::exception& e) {
      throw std::runtime_error("pretrain stage " + std::to_string(si + 1) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace simnet
