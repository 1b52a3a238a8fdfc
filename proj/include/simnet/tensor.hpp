#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace simnet {

// Dense H x W x C array of doubles, row-major with channel fastest:
// index = (h * width + w) * channels + c.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h, int w, int c, double fill = 0.0);

  double& at(int h, int w, int c) {
    return data[(static_cast<std::size_t>(h) * width + w) * channels + c];
  }
  double at(int h, int w, int c) const {
    return data[(static_cast<std::size_t>(h) * width + w) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Row-major rows x cols matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::span<const double> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols)}; }
  bool empty() const { return rows == 0 || cols == 0; }
};

// Sliding-window geometry with symmetric zero padding.
struct PatchGeometry {
  int field_h = 1;
  int field_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad = 0;

  int out_h(int in_h) const { return (in_h + 2 * pad - field_h) / stride_h + 1; }
  int out_w(int in_w) const { return (in_w + 2 * pad - field_w) / stride_w + 1; }
  bool is_unit() const {
    return field_h == 1 && field_w == 1 && stride_h == 1 && stride_w == 1 && pad == 0;
  }
};

// Throws std::invalid_argument when the geometry is malformed or yields an
// empty output grid for the given input dims.
void validate_geometry(const PatchGeometry& geom, int in_h, int in_w);

// One row per output location in raster order; each row is the zero-padded
// window flattened in (row, col, channel) order. Row count = out_h * out_w,
// row length = field_h * field_w * channels.
Matrix extract_patches(const Tensor3& input, const PatchGeometry& geom);

// Adjoint of extract_patches: accumulates patch-row gradients back onto an
// input-shaped tensor (overlapping windows sum, padding cells are dropped).
void scatter_patches(const Matrix& rows, const PatchGeometry& geom, Tensor3& grad_input);

Tensor3 add(const Tensor3& a, const Tensor3& b);
Tensor3 sub(const Tensor3& a, const Tensor3& b);
Tensor3 scale(const Tensor3& a, double s);
Tensor3 hadamard(const Tensor3& a, const Tensor3& b);

void require_finite(std::span<const double> values, const char* what);

}  // namespace simnet
