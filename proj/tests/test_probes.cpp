#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "flatff/errors.hpp"
#include "flatff/probes.hpp"

using namespace flatff;

namespace {

/// L = 1/2 sum lambda_k w_k^2
LossFn quadratic(std::vector<double> lambda) {
  return [lambda](std::span<const double> w) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += 0.5 * lambda[k] * w[k] * w[k];
    return s;
  };
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// R^2 of a least-squares parabola through (x, y).
double parabola_r2(const std::vector<double>& x, const std::vector<double>& y) {
  std::array<std::array<double, 4>, 3> a{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double b[3] = {1.0, x[i], x[i] * x[i]};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r][c] += b[r] * b[c];
      a[r][3] += b[r] * y[i];
    }
  }
  for (int p = 0; p < 3; ++p)
    for (int r = p + 1; r < 3; ++r) {
      const double f = a[r][p] / a[p][p];
      for (int c = p; c < 4; ++c) a[r][c] -= f * a[p][c];
    }
  double coef[3];
  for (int r = 2; r >= 0; --r) {
    double s = a[r][3];
    for (int c = r + 1; c < 3; ++c) s -= a[r][c] * coef[c];
    coef[r] = s / a[r][r];
  }
  double mean = 0.0;
  for (double v : y) mean += v / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = coef[0] + coef[1] * x[i] + coef[2] * x[i] * x[i];
    ss_res += (y[i] - f) * (y[i] - f);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

}  // namespace

TEST_CASE("constant loss has zero sharpness") {
  const std::vector<double> w{0.1, 0.2, 0.3};
  const auto est = measure_sharpness([](std::span<const double>) { return 4.2; }, w, 0.05, 200, 1);
  CHECK(est.value == 0.0);
  CHECK(est.n_samples == 200);
  CHECK(est.rho == 0.05);
  CHECK(est.seed == 1);
}

TEST_CASE("isotropic quadratic: every sphere sample is the maximum") {
  for (std::size_t dim : {1u, 2u, 3u, 4u}) {
    const double lambda = 3.0, rho = 0.05;
    const std::vector<double> w(dim, 0.0);
    const auto est = measure_sharpness(quadratic(std::vector<double>(dim, lambda)), w, rho, 1000, 7);
    const double exact = 0.5 * lambda * rho * rho;
    CHECK(est.value <= exact * (1 + 1e-12));
    CHECK(est.value >= 0.9 * exact);
  }
}

TEST_CASE("anisotropic quadratic: lower bound and coverage up to dimension 4") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (std::size_t dim : {2u, 3u, 4u}) {
      std::vector<double> lambda(dim, 0.0);
      lambda[0] = 2.0;
      if (dim > 2) lambda[1] = 0.5;
      const std::vector<double> w(dim, 0.0);
      const auto est = measure_sharpness(quadratic(lambda), w, 0.05, 1000, seed);
      const double exact = 0.5 * 2.0 * 0.05 * 0.05;
      INFO("seed " << seed << " dim " << dim);
      CHECK(est.value <= exact * (1 + 1e-12));
      CHECK(est.value >= 0.9 * exact);
      CHECK(norm(est.argmax_direction) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sharpness is linear in lambda for a fixed seed") {
  const std::vector<double> w{0.0, 0.0, 0.0};
  const auto a = measure_sharpness(quadratic({1.0, 0.3, 0.1}), w, 0.05, 300, 5);
  const auto b = measure_sharpness(quadratic({2.0, 0.6, 0.2}), w, 0.05, 300, 5);
  CHECK(b.value == doctest::Approx(2.0 * a.value).epsilon(1e-13));
  CHECK(a.argmax_direction == b.argmax_direction);
}

TEST_CASE("prefix property and determinism") {
  const std::vector<double> w{0.4, -0.2, 0.1, 0.0, 0.3};
  auto fn = quadratic({1.0, 2.0, 3.0, 4.0, 5.0});
  double previous = -1.0;
  for (std::int64_t n : {1, 10, 100, 1000}) {
    const auto est = measure_sharpness(fn, w, 0.05, n, 11);
    CHECK(est.value >= previous);
    previous = est.value;
  }
  const auto again = measure_sharpness(fn, w, 0.05, 1000, 11);
  CHECK(again.value == previous);
  const auto other = measure_sharpness(fn, w, 0.05, 1000, 12);
  CHECK(other.value != previous);
}

TEST_CASE("sharpness argument checks") {
  const std::vector<double> w{0.0};
  auto fn = quadratic({1.0});
  CHECK_THROWS_AS(measure_sharpness(fn, w, 0.0, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(measure_sharpness(fn, w, 0.05, 0, 1), std::invalid_argument);
  auto bad = [](std::span<const double> x) { return x[0] > 0 ? std::nan("") : 0.0; };
  CHECK_THROWS_AS(measure_sharpness(bad, w, 0.05, 100, 1), NumericalError);
}

TEST_CASE("uniform grid") {
  const auto g = uniform_grid(41);
  REQUIRE(g.size() == 41);
  CHECK(g.front() == -1.0);
  CHECK(g.back() == 1.0);
  CHECK(g[20] == 0.0);
  CHECK(g[1] - g[0] == doctest::Approx(0.05));
}

TEST_CASE("loss scan") {
  const std::vector<double> w{0.5, -0.5, 1.0};
  auto fn = quadratic({1.0, 4.0, 0.5});
  SUBCASE("single point is L(w)") {
    const std::vector<double> grid{0.0};
    const auto s = loss_scan(fn, w, grid, 3);
    REQUIRE(s.values.size() == 1);
    CHECK(s.values[0] == fn(w));
  }
  SUBCASE("quadratic gives a parabola with the right curvature") {
    const auto grid = uniform_grid(41);
    const auto s = loss_scan(fn, w, grid, 3, 0.05);
    CHECK(parabola_r2(s.grid, s.values) > 0.999999);
    CHECK(norm(s.direction) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.values[20] == fn(w));
    // Second difference / h^2 = d^T H d * scale^2.
    double curv = 0.0;
    const double lam[3] = {1.0, 4.0, 0.5};
    for (int k = 0; k < 3; ++k) curv += lam[k] * s.direction[k] * s.direction[k];
    const double h = grid[1] - grid[0];
    const double second = (s.values[21] - 2 * s.values[20] + s.values[19]) / (h * h);
    CHECK(second == doctest::Approx(curv * 0.05 * 0.05).epsilon(1e-6));
  }
  SUBCASE("same seed, same scan") {
    const auto grid = uniform_grid(11);
    const auto a = loss_scan(fn, w, grid, 8);
    const auto b = loss_scan(fn, w, grid, 8);
    CHECK(a.values == b.values);
    CHECK(a.direction == b.direction);
    CHECK(loss_scan(fn, w, grid, 9).direction != a.direction);
  }
  SUBCASE("even loss is symmetric about its minimum") {
    auto even = [](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += std::cosh(v) + v * v * v * v;
      return s;
    };
    const std::vector<double> origin(6, 0.0);
    const auto grid = uniform_grid(21);
    const auto s = loss_scan(even, origin, grid, 2, 0.5);
    for (std::size_t k = 0; k < 10; ++k) CHECK(std::abs(s.values[k] - s.values[20 - k]) < 1e-10);
  }
  SUBCASE("argument checks") {
    const std::vector<double> empty;
    CHECK_THROWS_AS(loss_scan(fn, w, empty, 1), std::invalid_argument);
    const std::vector<double> outside{1.5};
    CHECK_THROWS_AS(loss_scan(fn, w, outside, 1), std::invalid_argument);
  }
}
