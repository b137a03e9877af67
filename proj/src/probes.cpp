#include "flatff/probes.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "flatff/errors.hpp"
#include "flatff/rng.hpp"

namespace flatff {

namespace {

std::vector<double> random_unit(std::size_t n, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> d(n);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& x : d) {
      x = gauss(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : d) x *= inv;
  return d;
}

double checked(double v) {
  if (!std::isfinite(v)) throw NumericalError("loss evaluation is not finite");
  return v;
}

}  // namespace

SharpnessEstimate measure_sharpness(const LossFn& loss_fn, std::span<const double> w,
                                    double rho, std::int64_t n_samples,
                                    std::uint64_t seed) {
  if (!(rho > 0.0)) throw std::invalid_argument("sharpness radius must be > 0");
  if (n_samples < 1) throw std::invalid_argument("sharpness needs at least one sample");
  Rng rng = make_stream(seed, "probe");
  const double base = checked(loss_fn(w));
  SharpnessEstimate est;
  est.rho = rho;
  est.n_samples = n_samples;
  est.seed = seed;
  est.value = -std::numeric_limits<double>::infinity();
  std::vector<double> probe(w.begin(), w.end());
  for (std::int64_t s = 0; s < n_samples; ++s) {
    const std::vector<double> dir = random_unit(w.size(), rng);
    for (std::size_t q = 0; q < w.size(); ++q) probe[q] = w[q] + rho * dir[q];
    const double rise = checked(loss_fn(probe)) - base;
    if (rise > est.value) {
      est.value = rise;
      est.argmax_direction = dir;
    }
  }
  return est;
}

LossScan loss_scan(const LossFn& loss_fn, std::span<const double> w,
                   std::span<const double> grid, std::uint64_t seed, double scale) {
  if (grid.empty()) throw std::invalid_argument("loss scan grid is empty");
  for (double p : grid) {
    if (!(p >= -1.0 && p <= 1.0)) throw std::invalid_argument("scan grid must lie in [-1, 1]");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("scan scale must be > 0");
  Rng rng = make_stream(seed, "scan");
  LossScan scan;
  scan.direction = random_unit(w.size(), rng);
  scan.scale = scale;
  scan.grid.assign(grid.begin(), grid.end());
  std::vector<double> probe(w.size());
  for (double p : grid) {
    for (std::size_t q = 0; q < w.size(); ++q) {
      probe[q] = w[q] + p * scale * scan.direction[q];
    }
    scan.values.push_back(checked(loss_fn(probe)));
  }
  return scan;
}

std::vector<double> uniform_grid(std::size_t points) {
  if (points == 0) return {};
  if (points == 1) return {0.0};
  std::vector<double> g(points);
  const double h = 2.0 / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) g[k] = -1.0 + h * static_cast<double>(k);
  if (points % 2 == 1) g[points / 2] = 0.0;
  return g;
}

}  // namespace flatff
