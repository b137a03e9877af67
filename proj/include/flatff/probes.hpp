#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flatff/mlp.hpp"

namespace flatff {

using LossFn = std::function<double(std::span<const double> w)>;

/// Sampled sharpness: max over n directions on the radius-rho sphere of
/// L(w + e) - L(w). Always a lower bound of the true neighbourhood maximum.
struct SharpnessEstimate {
  double value = 0.0;
  double rho = 0.0;
  std::int64_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> argmax_direction;  // unit vector
};

/// Directions are Gaussian draws normalised to |e| = rho, taken in order from
/// the "probe" stream of `seed`; a longer run extends a shorter one.
SharpnessEstimate measure_sharpness(const LossFn& loss_fn, std::span<const double> w,
                                    double rho = 0.05, std::int64_t n_samples = 1000,
                                    std::uint64_t seed = 0);

/// L(w + p d) along one random direction d with |d| = scale.
struct LossScan {
  std::vector<double> direction;  // unit vector
  double scale = 0.05;
  std::vector<double> grid;
  std::vector<double> values;
};

LossScan loss_scan(const LossFn& loss_fn, std::span<const double> w,
                   std::span<const double> grid, std::uint64_t seed,
                   double scale = 0.05);

/// `points` evenly spaced values covering [-1, 1] (includes 0 when odd).
std::vector<double> uniform_grid(std::size_t points = 41);

}  // namespace flatff
