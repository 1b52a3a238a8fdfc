#pragma once

// Self-contained straight-line re-implementation of the deep network forward
// pass, used as an independent oracle. Deliberately shares no code with the
// library: plain std::vector parameters, naive loops, long double
// accumulation, and the log-mean-exp written directly from its definition.

#include <cmath>
#include <vector>

namespace straightline {

struct Layer {
  int field_h = 1, field_w = 1, stride_h = 1, stride_w = 1, pad = 0;
  std::vector<std::vector<double>> filters;    // d_out rows of length d_in
  std::vector<std::vector<double>> templates;  // n rows of length d_out
  std::vector<std::vector<double>> weights;    // empty when unweighted
  bool linear = false;
  double p = 2.0;
  bool has_pool = false;
  int pool_h = 2, pool_w = 2, pool_stride_h = 2, pool_stride_w = 2;
  bool pool_global = false;
  double pool_beta = 0.0;
};

struct Net {
  std::vector<Layer> layers;
  std::vector<std::vector<double>> offsets;  // k rows of length n_last
  double beta_class = 1.0;
  double beta_global = 1.0;
};

// Image stored as image[h][w][c].
using Image = std::vector<std::vector<std::vector<double>>>;

inline double logmeanexp(const std::vector<long double>& v, long double beta) {
  const long double n = static_cast<long double>(v.size());
  if (beta > -1e-8 && beta < 1e-8) {
    long double s = 0;
    for (long double x : v) s += x;
    return static_cast<double>(s / n);
  }
  long double m = beta * v[0];
  for (long double x : v) m = std::max(m, beta * x);
  long double s = 0;
  for (long double x : v) s += expl(beta * x - m);
  return static_cast<double>((m + logl(s / n)) / beta);
}

inline std::vector<double> forward(const Net& net, const Image& input) {
  Image cur = input;
  for (const Layer& layer : net.layers) {
    const int in_h = static_cast<int>(cur.size());
    const int in_w = static_cast<int>(cur[0].size());
    const int in_c = static_cast<int>(cur[0][0].size());
    const int oh = (in_h + 2 * layer.pad - layer.field_h) / layer.stride_h + 1;
    const int ow = (in_w + 2 * layer.pad - layer.field_w) / layer.stride_w + 1;
    const int n = static_cast<int>(layer.templates.size());

    Image maps(oh, std::vector<std::vector<double>>(ow, std::vector<double>(n, 0.0)));
    for (int oi = 0; oi < oh; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        std::vector<double> patch;
        for (int fh = 0; fh < layer.field_h; ++fh) {
          for (int fw = 0; fw < layer.field_w; ++fw) {
            const int h = oi * layer.stride_h - layer.pad + fh;
            const int w = oj * layer.stride_w - layer.pad + fw;
            for (int c = 0; c < in_c; ++c) {
              const bool inside = h >= 0 && h < in_h && w >= 0 && w < in_w;
              patch.push_back(inside ? cur[h][w][c] : 0.0);
            }
          }
        }
        std::vector<double> y(layer.filters.size(), 0.0);
        for (std::size_t r = 0; r < layer.filters.size(); ++r) {
          long double acc = 0;
          for (std::size_t i = 0; i < patch.size(); ++i) acc += layer.filters[r][i] * patch[i];
          y[r] = static_cast<double>(acc);
        }
        for (int l = 0; l < n; ++l) {
          long double acc = 0;
          for (std::size_t i = 0; i < y.size(); ++i) {
            const double u = layer.weights.empty() ? 1.0 : layer.weights[l][i];
            if (layer.linear) {
              acc += u * y[i] * layer.templates[l][i];
            } else {
              acc -= u * powl(fabsl(y[i] - layer.templates[l][i]), layer.p);
            }
          }
          maps[oi][oj][l] = static_cast<double>(acc);
        }
      }
    }

    if (layer.has_pool) {
      const int ph = layer.pool_global ? oh : layer.pool_h;
      const int pw = layer.pool_global ? ow : layer.pool_w;
      const int sh = layer.pool_global ? 1 : layer.pool_stride_h;
      const int sw = layer.pool_global ? 1 : layer.pool_stride_w;
      const int qh = (oh - ph) / sh + 1;
      const int qw = (ow - pw) / sw + 1;
      Image pooled(qh, std::vector<std::vector<double>>(qw, std::vector<double>(n, 0.0)));
      for (int oi = 0; oi < qh; ++oi) {
        for (int oj = 0; oj < qw; ++oj) {
          for (int l = 0; l < n; ++l) {
            std::vector<long double> window;
            for (int fh = 0; fh < ph; ++fh) {
              for (int fw = 0; fw < pw; ++fw) {
                window.push_back(maps[oi * sh + fh][oj * sw + fw][l]);
              }
            }
            pooled[oi][oj][l] = logmeanexp(window, layer.pool_beta);
          }
        }
      }
      cur = pooled;
    } else {
      cur = maps;
    }
  }

  const int k = static_cast<int>(net.offsets.size());
  const int n = static_cast<int>(net.offsets[0].size());
  std::vector<double> scores(k, 0.0);
  for (int r = 0; r < k; ++r) {
    std::vector<long double> locals;
    for (std::size_t h = 0; h < cur.size(); ++h) {
      for (std::size_t w = 0; w < cur[0].size(); ++w) {
        std::vector<long double> vals;
        for (int l = 0; l < n; ++l) vals.push_back(cur[h][w][l] + net.offsets[r][l]);
        locals.push_back(logmeanexp(vals, net.beta_class));
      }
    }
    scores[r] = logmeanexp(locals, net.beta_global);
  }
  return scores;
}

}  // namespace straightline
