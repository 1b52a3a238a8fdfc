#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "simnet/mex.hpp"
#include "simnet/serial_ref.hpp"

using namespace simnet;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, int n, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double fd_mex_component(std::vector<double> v, double beta, int i, double h = 1e-6) {
  v[i] += h;
  const double up = mex(v, beta);
  v[i] -= 2 * h;
  const double dn = mex(v, beta);
  return (up - dn) / (2 * h);
}

}  // namespace

TEST_CASE("single element and constant inputs") {
  std::vector<double> one{-3.25};
  CHECK(mex(one, 0.9) == doctest::Approx(-3.25).epsilon(1e-15));
  CHECK(mex(one, -7.0) == doctest::Approx(-3.25).epsilon(1e-15));
  std::vector<double> c{5.0, 5.0, 5.0};
  CHECK(mex(c, 3.7) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("direct evaluation of the log-mean-exp formula") {
  // (1/1) log((e^0 + e^{ln 3})/2) = log 2, frozen from extended precision.
  std::vector<double> v{0.0, std::log(3.0)};
  CHECK(mex(v, 1.0) == doctest::Approx(0.69314718055994531).epsilon(1e-14));
}

TEST_CASE("beta below the switch returns the mean") {
  std::vector<double> v{1.0, 2.0, 3.0};
  CHECK(mex(v, 1e-12) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("offsets shift the arguments") {
  MexUnit unit{1.0, std::vector<double>{0.0, 0.0}};
  std::vector<double> x{1.0, 2.0};
  CHECK(mex_with_offsets(x, unit) == doctest::Approx(mex(x, 1.0)).epsilon(1e-15));

  MexUnit ln3{1.0, std::vector<double>{0.0, std::log(3.0)}};
  std::vector<double> zeros{0.0, 0.0};
  CHECK(mex_with_offsets(zeros, ln3) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  MexUnit cancel{2.3, std::vector<double>{0.7, -1.9}};
  std::vector<double> neg{-0.7, 1.9};
  CHECK(mex_with_offsets(neg, cancel) == doctest::Approx(0.0).epsilon(1e-14));

  MexUnit bad{1.0, std::vector<double>{1.0}};
  CHECK_THROWS_AS(mex_with_offsets(x, bad), std::invalid_argument);
}

TEST_CASE("errors on empty or non-finite input") {
  std::vector<double> empty;
  CHECK_THROWS_AS(mex(empty, 1.0), std::invalid_argument);
  std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(mex(bad, 1.0), std::invalid_argument);
}

TEST_CASE("gradient is the softmax weight vector") {
  std::vector<double> c{4.0, 4.0, 4.0, 4.0};
  for (double w : mex_grad(c, 2.5)) CHECK(w == doctest::Approx(0.25).epsilon(1e-14));
  for (double w : mex_grad(c, 1e-12)) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));

  std::vector<double> v{0.0, std::log(3.0)};
  std::vector<double> g = mex_grad(v, 1.0);
  CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.75).epsilon(1e-12));
  for (int i = 0; i < 2; ++i) {
    const double fd = fd_mex_component(v, 1.0, i);
    CHECK(std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-8) < 1e-6);
  }
}

TEST_CASE("property: bounds, monotonicity in beta, translation") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> betas(-100.0, 100.0);
  std::uniform_int_distribution<int> sizes(1, 9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v = random_vec(rng, sizes(rng));
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    const double b1 = betas(rng), b2 = betas(rng);
    const double m1 = mex(v, b1);
    REQUIRE(m1 >= lo);
    REQUIRE(m1 <= hi);
    // Monotone in beta.
    if (b1 < b2) {
      REQUIRE(m1 <= mex(v, b2) + 1e-12);
    } else if (b2 < b1) {
      REQUIRE(mex(v, b2) <= m1 + 1e-12);
    }
    // Translation: mex(v + t) = mex(v) + t.
    const double t = betas(rng) / 25.0;
    std::vector<double> shifted = v;
    for (double& x : shifted) x += t;
    REQUIRE(std::abs(mex(shifted, b1) - (m1 + t)) <= 1e-9);
  }
}

TEST_CASE("property: collapsing over a grid") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> betas(-30.0, 30.0);
  std::uniform_int_distribution<int> sizes(1, 6);
  for (int trial = 0; trial < 400; ++trial) {
    double beta = betas(rng);
    if (std::abs(beta) < 1e-3) beta = 1e-3;
    const int n = sizes(rng), m = sizes(rng);
    std::vector<double> flat;
    std::vector<double> row_mex;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row = random_vec(rng, m);
      flat.insert(flat.end(), row.begin(), row.end());
      row_mex.push_back(mex(row, beta));
    }
    REQUIRE(std::abs(mex(row_mex, beta) - mex(flat, beta)) <= 1e-9);
  }
}

TEST_CASE("property: max and mean limits") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v = random_vec(rng, 6);
    const double hi = *std::max_element(v.begin(), v.end());
    const double lo = *std::min_element(v.begin(), v.end());
    for (double beta : {0.5, 3.0, 40.0, 150.0}) {
      REQUIRE(std::abs(mex(v, beta) - hi) <= std::log(6.0) / beta + 1e-12);
    }
    double mean = 0.0;
    for (double x : v) mean += x / 6.0;
    REQUIRE(std::abs(mex(v, 1e-6) - mean) <= 1e-4 * std::max(hi - lo, 1e-30));
  }
}

TEST_CASE("property: gradient matches finite differences and sums to one") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> betas(-8.0, 8.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v = random_vec(rng, 5, -2.0, 2.0);
    const double beta = betas(rng);
    std::vector<double> g = mex_grad(v, beta);
    double sum = 0.0;
    for (double w : g) {
      REQUIRE(w >= 0.0);
      sum += w;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-12);
    for (int i = 0; i < 5; ++i) {
      const double fd = fd_mex_component(v, beta, i);
      const double m = std::max(std::abs(g[i]), std::abs(fd));
      if (m >= 1e-4) {
        REQUIRE(std::abs(g[i] - fd) / m <= 1e-5);
      } else {
        // Weights this small sit below the h=1e-6 central-difference noise
        // floor (~1e-10); only an absolute agreement is meaningful.
        REQUIRE(std::abs(g[i] - fd) <= 1e-8);
      }
    }
  }
}

TEST_CASE("beta gradient: analytic vs finite differences, plus the beta=0 branch") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v = random_vec(rng, 4, -1.5, 1.5);
    for (double beta : {-3.0, -0.4, 0.7, 5.0}) {
      const double h = 1e-6;
      const double fd = (mex(v, beta + h) - mex(v, beta - h)) / (2 * h);
      const double an = mex_beta_grad(v, beta);
      REQUIRE(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}) <= 1e-5);
    }
    // Limit branch: variance / 2.
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x / 4.0;
    for (double x : v) var += (x - mean) * (x - mean) / 4.0;
    CHECK(mex_beta_grad(v, 0.0) == doctest::Approx(var / 2.0).epsilon(1e-12));
    const double fd0 = (mex(v, 1e-5) - mex(v, -1e-5)) / 2e-5;
    CHECK(mex_beta_grad(v, 0.0) == doctest::Approx(fd0).epsilon(1e-4));
  }
}

TEST_CASE("overflow safety at extreme inputs") {
  std::vector<double> v{1e6, -1e6, 5e5};
  const double r = mex(v, 50.0);
  CHECK(std::isfinite(r));
  // Other exponentials vanish, leaving max - ln(n)/beta.
  CHECK(r == doctest::Approx(1e6 - std::log(3.0) / 50.0).epsilon(1e-12));
  CHECK(std::isfinite(mex(v, -50.0)));
}

TEST_CASE("global mex pooling: average and near-max limits") {
  Tensor3 in(2, 2, 1);
  in.data = {1.0, 2.0, 3.0, 4.0};
  PoolSpec avg{2, 2, 2, 2, 1e-12, true};
  Tensor3 a = mex_pool(in, avg);
  REQUIRE(a.height == 1);
  REQUIRE(a.channels == 1);
  CHECK(a.data[0] == doctest::Approx(2.5).epsilon(1e-12));

  PoolSpec mx{2, 2, 2, 2, 100.0, true};
  Tensor3 m = mex_pool(in, mx);
  CHECK(std::abs(m.data[0] - 4.0) <= std::log(4.0) / 100.0 + 1e-12);
  CHECK(std::abs(m.data[0] - 4.0) <= 0.05);
}

TEST_CASE("windowed pooling of zeros is zero") {
  Tensor3 in(4, 4, 1);
  PoolSpec spec{2, 2, 2, 2, 17.0, false};
  Tensor3 out = mex_pool(in, spec);
  REQUIRE(out.height == 2);
  REQUIRE(out.width == 2);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("pooling matches the serial reference bit-for-bit") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  Tensor3 in(7, 6, 3);
  for (double& v : in.data) v = val(rng);
  for (double beta : {0.0, -4.0, 8.0, 60.0}) {
    PoolSpec spec{3, 2, 2, 2, beta, false};
    Tensor3 a = mex_pool(in, spec);
    Tensor3 b = ref::mex_pool(in, spec);
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(a.data[i] == b.data[i]);
  }
  PoolSpec g{1, 1, 1, 1, 2.5, true};
  Tensor3 a = mex_pool(in, g);
  Tensor3 b = ref::mex_pool(in, g);
  for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(a.data[i] == b.data[i]);
}

TEST_CASE("pool backward distributes by softmax weight and tracks beta") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Tensor3 in(4, 4, 2);
  for (double& v : in.data) v = val(rng);
  PoolSpec spec{2, 2, 2, 2, 3.0, false};
  Tensor3 out = mex_pool(in, spec);
  Tensor3 up(out.height, out.width, out.channels);
  for (double& v : up.data) v = val(rng);

  Tensor3 grad(4, 4, 2);
  double gbeta = 0.0;
  mex_pool_backward(in, spec, up, grad, &gbeta);

  // Finite differences on sum(up .* pool(in)).
  auto objective = [&](const Tensor3& x, double beta) {
    PoolSpec s = spec;
    s.beta = beta;
    Tensor3 o = mex_pool(x, s);
    double acc = 0.0;
    for (std::size_t i = 0; i < o.data.size(); ++i) acc += up.data[i] * o.data[i];
    return acc;
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < in.data.size(); i += 5) {
    Tensor3 xp = in, xm = in;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (objective(xp, spec.beta) - objective(xm, spec.beta)) / (2 * h);
    REQUIRE(std::abs(grad.data[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
  const double fdb = (objective(in, spec.beta + h) - objective(in, spec.beta - h)) / (2 * h);
  CHECK(gbeta == doctest::Approx(fdb).epsilon(1e-5));
}
