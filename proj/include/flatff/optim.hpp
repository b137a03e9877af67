#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "flatff/loss.hpp"
#include "flatff/mlp.hpp"

namespace flatff {

/// Adam moments and hyperparameters. Defaults follow the reference training
/// table: (beta1, beta2) = (0.9, 0.999).
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double eta = 2e-3;

  static AdamState zeros(std::size_t n, double eta = 2e-3, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8);
};

/// In-place bias-corrected Adam update. NumericalError on a non-finite result.
void adam_update(ParamVector& w, std::span<const double> grad, AdamState& state);

std::pair<ParamVector, AdamState> adam_step(const ParamVector& w,
                                            std::span<const double> grad,
                                            const AdamState& state);

struct SamConfig {
  double rho = 0.0;
};

/// Fills `grad` with dL/dw at w and returns the loss there.
using GradientFn =
    std::function<LossValue(std::span<const double> w, std::vector<double>& grad)>;

/// Sharpness-aware step around a base Adam optimizer:
///   g1 = grad L(w);  w' = w + rho * g1 / |g1|;  g2 = grad L(w');  Adam(w, g2)
/// With rho == 0 or g1 == 0 this is exactly adam_update(w, g1) and costs one
/// gradient evaluation instead of two. Returns the loss at w.
LossValue sam_update(ParamVector& w, const GradientFn& grad_fn, AdamState& adam,
                     const SamConfig& sam);

std::pair<ParamVector, AdamState> sam_step(const ParamVector& w,
                                           const GradientFn& grad_fn,
                                           const AdamState& adam,
                                           const SamConfig& sam);

/// Reduce-on-plateau learning-rate schedule.
struct SchedulerState {
  std::int64_t patience = 50;
  double factor = 0.5;
  double min_delta = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t epochs_since_improve = 0;
  double current_lr = 2e-3;
};

/// Resets the counter on val_loss < best - min_delta; otherwise increments
/// it and, once it exceeds patience, scales the rate by factor.
SchedulerState scheduler_update(SchedulerState state, double val_loss);

/// True iff the best validation loss inside the trailing `window` epochs
/// improves on the best before it by no more than `delta`. Histories of at
/// most `window` entries never stop.
bool check_stop(std::span<const double> val_history, std::size_t window = 100,
                double delta = 3e-3);

}  // namespace flatff
