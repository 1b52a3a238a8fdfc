#include "simnet/serial_ref.hpp"

#include <vector>

namespace simnet::ref {

Matrix extract_patches(const Tensor3& input, const PatchGeometry& geom) {
  validate_geometry(geom, input.height, input.width);
  const int oh = geom.out_h(input.height);
  const int ow = geom.out_w(input.width);
  const int c = input.channels;
  Matrix out(oh * ow, geom.field_h * geom.field_w * c);
  for (int oi = 0; oi < oh; ++oi) {
    for (int oj = 0; oj < ow; ++oj) {
      double* dst = out.row(oi * ow + oj);
      for (int fh = 0; fh < geom.field_h; ++fh) {
        for (int fw = 0; fw < geom.field_w; ++fw) {
          const int h = oi * geom.stride_h - geom.pad + fh;
          const int w = oj * geom.stride_w - geom.pad + fw;
          for (int ch = 0; ch < c; ++ch) {
            const bool inside = h >= 0 && h < input.height && w >= 0 && w < input.width;
            *dst++ = inside ? input.at(h, w, ch) : 0.0;
          }
        }
      }
    }
  }
  return out;
}

Tensor3 similarity_map(const Tensor3& input, const SimilarityLayer& layer) {
  validate_layer(layer);
  const Matrix patches = ref::extract_patches(input, layer.geom);
  const int oh = layer.geom.out_h(input.height);
  const int ow = layer.geom.out_w(input.width);
  const int n = layer.num_templates();
  const int d = layer.dim();
  Tensor3 out(oh, ow, n);
  for (int t = 0; t < patches.rows; ++t) {
    const double* x = patches.row(t);
    for (int l = 0; l < n; ++l) {
      const double* z = layer.templates.row(l);
      const double* u = layer.weighted ? layer.weights.row(l) : nullptr;
      double acc = 0.0;
      if (layer.kind == SimilarityKind::Linear) {
        for (int i = 0; i < d; ++i) acc += (u != nullptr ? u[i] : 1.0) * x[i] * z[i];
      } else {
        for (int i = 0; i < d; ++i) {
          acc -= (u != nullptr ? u[i] : 1.0) * pow_abs(x[i] - z[i], layer.order_p);
        }
      }
      out.data[static_cast<std::size_t>(t) * n + l] = acc;
    }
  }
  return out;
}

Matrix transform_rows(const Matrix& patches, const Matrix& filters) {
  Matrix out(patches.rows, filters.rows);
  for (int t = 0; t < patches.rows; ++t) {
    for (int r = 0; r < filters.rows; ++r) {
      const double* x = patches.row(t);
      const double* w = filters.row(r);
      double acc = 0.0;
      for (int i = 0; i < filters.cols; ++i) acc += w[i] * x[i];
      out.at(t, r) = acc;
    }
  }
  return out;
}

Tensor3 conv_lp_sim(const Tensor3& input, const ConvLpSim& block) {
  validate_block(block, input.channels);
  const Matrix patches = ref::extract_patches(input, block.geom);
  const Matrix whitened = ref::transform_rows(patches, block.filters);
  const int oh = block.geom.out_h(input.height);
  const int ow = block.geom.out_w(input.width);
  Tensor3 grid(oh, ow, whitened.cols);
  grid.data = whitened.data;
  SimilarityLayer unit = block.sim;
  unit.geom = PatchGeometry{};
  return ref::similarity_map(grid, unit);
}

Tensor3 mex_pool(const Tensor3& input, const PoolSpec& spec) {
  PoolSpec s = spec;
  int wh = s.window_h, ww = s.window_w, sh = s.stride_h, sw = s.stride_w;
  if (s.global) {
    wh = input.height;
    ww = input.width;
    sh = sw = 1;
  }
  const int oh = (input.height - wh) / sh + 1;
  const int ow = (input.width - ww) / sw + 1;
  Tensor3 out(oh, ow, input.channels);
  std::vector<double> window;
  for (int oi = 0; oi < oh; ++oi) {
    for (int oj = 0; oj < ow; ++oj) {
      for (int ch = 0; ch < input.channels; ++ch) {
        window.clear();
        for (int fh = 0; fh < wh; ++fh) {
          for (int fw = 0; fw < ww; ++fw) {
            window.push_back(input.at(oi * sh + fh, oj * sw + fw, ch));
          }
        }
        out.at(oi, oj, ch) = mex(window, s.beta);
      }
    }
  }
  return out;
}

}  // namespace simnet::ref
