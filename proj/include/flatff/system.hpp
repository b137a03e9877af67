#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "flatff/rng.hpp"
#include "flatff/vec3.hpp"

namespace flatff {

using ImageCount = std::array<std::int32_t, 3>;

/// N atoms in a periodic cubic box.
///
/// Positions are kept wrapped into [0, box_length)^3. `images` counts how many
/// times each atom has crossed each face, so `x + images * L` is the continuous
/// (unwrapped) trajectory. Neighbor tables rely on that to stay valid when an
/// atom wraps between rebuilds.
struct SystemState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<double> masses;
  std::vector<ImageCount> images;
  double box_length = 1.0;
  std::int64_t step_count = 0;

  std::size_t size() const { return positions.size(); }
  Vec3 unwrapped(std::size_t i) const;
};

/// Thermodynamic and integration settings shared by every simulation driver.
/// Reduced Lennard-Jones units (epsilon = sigma = m = k_B = 1).
struct SimConfig {
  double density = 0.8;
  double temperature = 0.7;
  double dt = 0.002;
  double skin = 0.3;
  double thermostat_tau_steps = 100.0;
};

/// Periodic image of `delta` with each component in [-L/2, L/2).
Vec3 minimum_image(Vec3 delta, double box_length);

/// State with zero velocities and unit masses; positions are wrapped.
SystemState make_state(std::vector<Vec3> positions, double box_length,
                       double mass = 1.0);

/// Wraps positions into the box, updating the image counters.
void wrap_positions(SystemState& state);

/// Throws NumericalError on any non-finite coordinate and std::invalid_argument
/// on non-positive masses or a malformed state.
void validate(const SystemState& state);

double kinetic_energy(const SystemState& state);

/// Sum m v^2 / (3N) with k_B = 1.
double instantaneous_temperature(const SystemState& state);

Vec3 total_momentum(const SystemState& state);

/// Smallest lattice box (simple, body-centred or face-centred cubic, whichever
/// divides n_atoms as b * n^3) at the given density. GeometryError otherwise.
SystemState lattice_state(std::size_t n_atoms, double density);

/// Maxwell-Boltzmann velocities at `temperature`, centre-of-mass momentum
/// removed, then rescaled so the instantaneous temperature equals the target.
void assign_velocities(SystemState& state, double temperature, Rng& rng);

/// Replicates the periodic cell `reps` times along every axis.
SystemState replicate(const SystemState& state, int reps);

}  // namespace flatff
