#include "flatff/integrate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flatff/errors.hpp"

namespace flatff {

namespace {

void check_forces(const ForceResult& f, std::size_t n) {
  if (f.forces.size() != n) {
    throw std::invalid_argument("force provider returned " +
                                std::to_string(f.forces.size()) + " forces for " +
                                std::to_string(n) + " atoms");
  }
  if (!std::isfinite(f.energy)) throw NumericalError("non-finite potential energy");
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(f.forces[i])) {
      throw NumericalError("non-finite force on atom " + std::to_string(i));
    }
  }
}

void half_kick(SystemState& s, const ForceResult& f, double half_dt) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.velocities[i] += (half_dt / s.masses[i]) * f.forces[i];
  }
}

void verlet_core(Frame& frame, ForceProvider& provider, double dt) {
  SystemState& s = frame.state;
  half_kick(s, frame.forces, 0.5 * dt);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.positions[i] += dt * s.velocities[i];
    if (!is_finite(s.positions[i]) || !is_finite(s.velocities[i])) {
      throw NumericalError("non-finite position or velocity for atom " +
                           std::to_string(i) + " at step " +
                           std::to_string(s.step_count + 1));
    }
  }
  wrap_positions(s);
  frame.forces = provider.compute(s);
  check_forces(frame.forces, s.size());
  half_kick(s, frame.forces, 0.5 * dt);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_finite(s.velocities[i])) {
      throw NumericalError("non-finite velocity for atom " + std::to_string(i));
    }
  }
}

void kick_friction(Thermostat& t, const SystemState& s, double half_dt) {
  const double n = static_cast<double>(s.size());
  t.xi += half_dt * (2.0 * kinetic_energy(s) - 3.0 * n * t.target_temperature) /
          t.coupling_mass;
}

void scale_velocities(SystemState& s, double factor) {
  for (auto& v : s.velocities) v *= factor;
}

}  // namespace

Frame make_frame(SystemState state, ForceProvider& provider) {
  validate(state);
  Frame frame{std::move(state), {}};
  frame.forces = provider.compute(frame.state);
  check_forces(frame.forces, frame.state.size());
  return frame;
}

void step_nve(Frame& frame, ForceProvider& provider, double dt) {
  verlet_core(frame, provider, dt);
  ++frame.state.step_count;
}

Thermostat make_thermostat(std::size_t n_atoms, double temperature, double dt,
                           double tau_steps) {
  const double tau = tau_steps * dt;
  Thermostat t;
  t.target_temperature = temperature;
  t.coupling_mass = 3.0 * static_cast<double>(n_atoms) * temperature * tau * tau;
  if (!(t.coupling_mass > 0.0) || !std::isfinite(t.coupling_mass)) {
    throw std::invalid_argument("thermostat coupling mass must be finite and positive");
  }
  return t;
}

void step_nvt(Frame& frame, ForceProvider& provider, double dt,
              Thermostat& thermostat) {
  if (!(thermostat.coupling_mass > 0.0) || !(thermostat.target_temperature > 0.0)) {
    throw std::invalid_argument("invalid thermostat");
  }
  SystemState& s = frame.state;
  kick_friction(thermostat, s, 0.5 * dt);
  scale_velocities(s, std::exp(-0.5 * dt * thermostat.xi));
  verlet_core(frame, provider, dt);
  scale_velocities(s, std::exp(-0.5 * dt * thermostat.xi));
  kick_friction(thermostat, s, 0.5 * dt);
  if (!std::isfinite(thermostat.xi)) throw NumericalError("thermostat variable diverged");
  ++s.step_count;
}

}  // namespace flatff
