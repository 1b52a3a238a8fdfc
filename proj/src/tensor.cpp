#include "simnet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace simnet {

Tensor3::Tensor3(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || c < 1) {
    throw std::invalid_argument("Tensor3: dims must be >= 1, got " + std::to_string(h) + "x" +
                                std::to_string(w) + "x" + std::to_string(c));
  }
  data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

Matrix::Matrix(int r, int c, double fill) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dims");
  data.assign(static_cast<std::size_t>(r) * c, fill);
}

void validate_geometry(const PatchGeometry& geom, int in_h, int in_w) {
  if (geom.field_h < 1 || geom.field_w < 1 || geom.stride_h < 1 || geom.stride_w < 1 ||
      geom.pad < 0) {
    throw std::invalid_argument("patch geometry: field/stride must be >= 1 and pad >= 0");
  }
  if (geom.out_h(in_h) < 1 || geom.out_w(in_w) < 1) {
    throw std::invalid_argument("patch geometry: " + std::to_string(geom.field_h) + "x" +
                                std::to_string(geom.field_w) + " field (pad " +
                                std::to_string(geom.pad) + ") yields empty output grid on " +
                                std::to_string(in_h) + "x" + std::to_string(in_w) + " input");
  }
}

Matrix extract_patches(const Tensor3& input, const PatchGeometry& geom) {
  validate_geometry(geom, input.height, input.width);
  const int oh = geom.out_h(input.height);
  const int ow = geom.out_w(input.width);
  const int c = input.channels;
  const int d = geom.field_h * geom.field_w * c;
  Matrix out(oh * ow, d);

#pragma omp parallel for schedule(static)
  for (int t = 0; t < oh * ow; ++t) {
    const int oi = t / ow;
    const int oj = t % ow;
    double* dst = out.row(t);
    const int h0 = oi * geom.stride_h - geom.pad;
    const int w0 = oj * geom.stride_w - geom.pad;
    for (int fh = 0; fh < geom.field_h; ++fh) {
      const int h = h0 + fh;
      for (int fw = 0; fw < geom.field_w; ++fw) {
        const int w = w0 + fw;
        if (h >= 0 && h < input.height && w >= 0 && w < input.width) {
          const double* src = &input.data[(static_cast<std::size_t>(h) * input.width + w) * c];
          for (int ch = 0; ch < c; ++ch) *dst++ = src[ch];
        } else {
          for (int ch = 0; ch < c; ++ch) *dst++ = 0.0;
        }
      }
    }
  }
  return out;
}

void scatter_patches(const Matrix& rows, const PatchGeometry& geom, Tensor3& grad_input) {
  validate_geometry(geom, grad_input.height, grad_input.width);
  const int oh = geom.out_h(grad_input.height);
  const int ow = geom.out_w(grad_input.width);
  const int c = grad_input.channels;
  if (rows.rows != oh * ow || rows.cols != geom.field_h * geom.field_w * c) {
    throw std::invalid_argument("scatter_patches: row matrix does not match geometry");
  }
  // Serial: overlapping windows write to shared cells.
  for (int t = 0; t < oh * ow; ++t) {
    const int oi = t / ow;
    const int oj = t % ow;
    const double* src = rows.row(t);
    const int h0 = oi * geom.stride_h - geom.pad;
    const int w0 = oj * geom.stride_w - geom.pad;
    for (int fh = 0; fh < geom.field_h; ++fh) {
      const int h = h0 + fh;
      for (int fw = 0; fw < geom.field_w; ++fw) {
        const int w = w0 + fw;
        if (h >= 0 && h < grad_input.height && w >= 0 && w < grad_input.width) {
          double* dst = &grad_input.data[(static_cast<std::size_t>(h) * grad_input.width + w) * c];
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
        src += c;
      }
    }
  }
}

namespace {

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor3 add(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "add");
  Tensor3 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor3 sub(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "sub");
  Tensor3 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor3 scale(const Tensor3& a, double s) {
  Tensor3 out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Tensor3 hadamard(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "hadamard");
  Tensor3 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": non-finite value");
    }
  }
}

}  // namespace simnet
