#pragma once

#include <cstddef>

#include "flatff/potential.hpp"
#include "flatff/system.hpp"

namespace flatff {

/// A state together with the forces at its current positions, so each
/// integration step costs exactly one force evaluation.
struct Frame {
  SystemState state;
  ForceResult forces;
};

Frame make_frame(SystemState state, ForceProvider& provider);

/// One velocity-Verlet step. NumericalError if anything becomes non-finite.
void step_nve(Frame& frame, ForceProvider& provider, double dt);

/// Single-variable Nose-Hoover thermostat; d(xi)/dt = (2K - 3N T) / Q.
struct Thermostat {
  double target_temperature = 1.0;
  double coupling_mass = 1.0;
  double xi = 0.0;
};

/// Q = 3 N T tau^2 with tau = tau_steps * dt.
Thermostat make_thermostat(std::size_t n_atoms, double temperature, double dt,
                           double tau_steps = 100.0);

/// One Nose-Hoover step: half-kick of xi, velocity scaling, velocity-Verlet
/// core, velocity scaling, half-kick of xi.
void step_nvt(Frame& frame, ForceProvider& provider, double dt,
              Thermostat& thermostat);

}  // namespace flatff
