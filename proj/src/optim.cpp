#include "flatff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flatff/errors.hpp"

namespace flatff {

AdamState AdamState::zeros(std::size_t n, double eta, double beta1, double beta2,
                           double eps) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.eta = eta;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_update(ParamVector& w, std::span<const double> grad, AdamState& s) {
  if (grad.size() != w.size() || s.m.size() != w.size() || s.v.size() != w.size()) {
    throw std::invalid_argument("adam: parameter, gradient and moment sizes differ");
  }
  ++s.t;
  const double t = static_cast<double>(s.t);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t q = 0; q < w.size(); ++q) {
    const double g = grad[q];
    if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient");
    s.m[q] = s.beta1 * s.m[q] + (1.0 - s.beta1) * g;
    s.v[q] = s.beta2 * s.v[q] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[q] / c1;
    const double v_hat = s.v[q] / c2;
    w[q] -= s.eta * m_hat / (std::sqrt(v_hat) + s.eps);
    if (!std::isfinite(w[q])) throw NumericalError("adam: non-finite update");
  }
}

std::pair<ParamVector, AdamState> adam_step(const ParamVector& w,
                                            std::span<const double> grad,
                                            const AdamState& state) {
  std::pair<ParamVector, AdamState> out{w, state};
  adam_update(out.first, grad, out.second);
  return out;
}

LossValue sam_update(ParamVector& w, const GradientFn& grad_fn, AdamState& adam,
                     const SamConfig& sam) {
  if (!(sam.rho >= 0.0) || !std::isfinite(sam.rho)) {
    throw std::invalid_argument("SAM rho must be finite and >= 0");
  }
  std::vector<double> g1;
  const LossValue at_w = grad_fn(w, g1);
  double norm2 = 0.0;
  for (double g : g1) norm2 += g * g;
  const double norm = std::sqrt(norm2);
  if (sam.rho == 0.0 || norm == 0.0) {
    adam_update(w, g1, adam);
    return at_w;
  }
  ParamVector perturbed(w);
  const double scale = sam.rho / norm;
  for (std::size_t q = 0; q < w.size(); ++q) {
    perturbed[q] += scale * g1[q];
    if (!std::isfinite(perturbed[q])) throw NumericalError("SAM: non-finite perturbation");
  }
  std::vector<double> g2;
  grad_fn(perturbed, g2);
  adam_update(w, g2, adam);
  return at_w;
}

std::pair<ParamVector, AdamState> sam_step(const ParamVector& w,
                                           const GradientFn& grad_fn,
                                           const AdamState& adam,
                                           const SamConfig& sam) {
  std::pair<ParamVector, AdamState> out{w, adam};
  sam_update(out.first, grad_fn, out.second, sam);
  return out;
}

SchedulerState scheduler_update(SchedulerState s, double val_loss) {
  if (!std::isfinite(val_loss)) throw NumericalError("scheduler: non-finite validation loss");
  if (val_loss < s.best_val - s.min_delta) {
    s.best_val = val_loss;
    s.epochs_since_improve = 0;
  } else {
    ++s.epochs_since_improve;
  }
  if (s.epochs_since_improve > s.patience) {
    s.current_lr *= s.factor;
    s.epochs_since_improve = 0;
  }
  return s;
}

bool check_stop(std::span<const double> val_history, std::size_t window, double delta) {
  if (window < 1) throw std::invalid_argument("check_stop: window must be >= 1");
  if (val_history.size() <= window) return false;
  const auto split = val_history.end() - static_cast<std::ptrdiff_t>(window);
  const double before = *std::min_element(val_history.begin(), split);
  const double recent = *std::min_element(split, val_history.end());
  return before - recent <= delta;
}

}  // namespace flatff
