#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "simnet/serial_ref.hpp"
#include "simnet/tensor.hpp"

using namespace simnet;

namespace {

// Independent window copier: walks every output cell with plain loops and
// bounds checks. Used as the oracle for extract_patches.
Matrix naive_patches(const Tensor3& in, const PatchGeometry& g) {
  const int oh = g.out_h(in.height);
  const int ow = g.out_w(in.width);
  Matrix out(oh * ow, g.field_h * g.field_w * in.channels);
  for (int oi = 0; oi < oh; ++oi) {
    for (int oj = 0; oj < ow; ++oj) {
      int k = 0;
      for (int fh = 0; fh < g.field_h; ++fh) {
        for (int fw = 0; fw < g.field_w; ++fw) {
          for (int c = 0; c < in.channels; ++c) {
            const int h = oi * g.stride_h + fh - g.pad;
            const int w = oj * g.stride_w + fw - g.pad;
            double v = 0.0;
            if (h >= 0 && w >= 0 && h < in.height && w < in.width) v = in.at(h, w, c);
            out.at(oi * ow + oj, k++) = v;
          }
        }
      }
    }
  }
  return out;
}

Tensor3 ramp_tensor(int h, int w, int c) {
  Tensor3 t(h, w, c);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.25 * static_cast<double>(i) - 3.0;
  return t;
}

}  // namespace

TEST_CASE("1x1 field over 1x1x3 input is the identity") {
  Tensor3 in(1, 1, 3);
  in.data = {1.5, -2.0, 7.0};
  Matrix m = extract_patches(in, PatchGeometry{1, 1, 1, 1, 0});
  REQUIRE(m.rows == 1);
  REQUIRE(m.cols == 3);
  CHECK(m.at(0, 0) == 1.5);
  CHECK(m.at(0, 1) == -2.0);
  CHECK(m.at(0, 2) == 7.0);
}

TEST_CASE("zero input gives zero patches") {
  Tensor3 in(3, 3, 1);
  Matrix m = extract_patches(in, PatchGeometry{2, 2, 1, 1, 0});
  REQUIRE(m.rows == 4);
  for (double v : m.data) CHECK(v == 0.0);
}

TEST_CASE("padded ramp input matches the naive window copier") {
  Tensor3 in = ramp_tensor(4, 4, 2);
  PatchGeometry g{3, 3, 1, 1, 1};
  Matrix a = extract_patches(in, g);
  Matrix b = naive_patches(in, g);
  REQUIRE(a.rows == 16);
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("exhaustive small geometry sweep agrees bit-exactly with the oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  for (int h = 1; h <= 8; h += 2) {
    for (int w = 2; w <= 8; w += 3) {
      for (int c = 1; c <= 3; c += 2) {
        Tensor3 in(h, w, c);
        for (double& v : in.data) v = val(rng);
        for (int fh = 1; fh <= h && fh <= 3; ++fh) {
          for (int fw = 1; fw <= w && fw <= 3; ++fw) {
            for (int stride = 1; stride <= 2; ++stride) {
              for (int pad = 0; pad <= 1; ++pad) {
                PatchGeometry g{fh, fw, stride, stride, pad};
                if (g.out_h(h) < 1 || g.out_w(w) < 1) continue;
                Matrix a = extract_patches(in, g);
                Matrix b = naive_patches(in, g);
                Matrix r = ref::extract_patches(in, g);
                REQUIRE(a.data.size() == b.data.size());
                for (std::size_t i = 0; i < a.data.size(); ++i) {
                  REQUIRE(a.data[i] == b.data[i]);
                  REQUIRE(a.data[i] == r.data[i]);
                }
              }
            }
          }
        }
      }
    }
  }
}

TEST_CASE("pad=0 patch rows are exact sub-copies of the input") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Tensor3 in(6, 5, 2);
  for (double& v : in.data) v = val(rng);
  PatchGeometry g{3, 2, 2, 1, 0};
  Matrix m = extract_patches(in, g);
  for (int oi = 0; oi < g.out_h(6); ++oi) {
    for (int oj = 0; oj < g.out_w(5); ++oj) {
      const double* row = m.row(oi * g.out_w(5) + oj);
      int k = 0;
      for (int fh = 0; fh < 3; ++fh) {
        for (int fw = 0; fw < 2; ++fw) {
          for (int c = 0; c < 2; ++c) {
            CHECK(row[k++] == in.at(oi * 2 + fh, oj + fw, c));
          }
        }
      }
    }
  }
}

TEST_CASE("geometry producing an empty grid is rejected") {
  Tensor3 in(2, 2, 1);
  CHECK_THROWS_AS(extract_patches(in, PatchGeometry{3, 3, 1, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(extract_patches(in, PatchGeometry{1, 1, 0, 1, 0}), std::invalid_argument);
}

TEST_CASE("scatter_patches is the adjoint of extract_patches") {
  // <extract(x), g> == <x, scatter(g)> for random x, g.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Tensor3 x(5, 4, 2);
  for (double& v : x.data) v = val(rng);
  PatchGeometry g{3, 3, 1, 1, 1};
  Matrix px = extract_patches(x, g);
  Matrix grad(px.rows, px.cols);
  for (double& v : grad.data) v = val(rng);

  double lhs = 0.0;
  for (std::size_t i = 0; i < px.data.size(); ++i) lhs += px.data[i] * grad.data[i];

  Tensor3 back(5, 4, 2);
  scatter_patches(grad, g, back);
  double rhs = 0.0;
  for (std::size_t i = 0; i < back.data.size(); ++i) rhs += back.data[i] * x.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("elementwise arithmetic") {
  Tensor3 x = ramp_tensor(2, 3, 2);
  Tensor3 zeros(2, 3, 2);

  Tensor3 s = add(x, zeros);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(s.data[i] == x.data[i]);

  Tensor3 sc = scale(x, 1.0);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(sc.data[i] == x.data[i]);

  Tensor3 a(1, 1, 2), b(1, 1, 2);
  a.data = {1.0, 2.0};
  b.data = {3.0, 4.0};
  Tensor3 h = hadamard(a, b);
  CHECK(h.data[0] == 3.0);
  CHECK(h.data[1] == 8.0);

  Tensor3 d = sub(x, x);
  for (double v : d.data) CHECK(v == 0.0);

  Tensor3 wrong(3, 2, 2);
  CHECK_THROWS_AS(add(x, wrong), std::invalid_argument);
  CHECK_THROWS_AS(hadamard(x, wrong), std::invalid_argument);
}
