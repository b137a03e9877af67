#include "flatff/system.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flatff/errors.hpp"

namespace flatff {

Vec3 SystemState::unwrapped(std::size_t i) const {
  Vec3 u = positions[i];
  for (std::size_t k = 0; k < 3; ++k) {
    u[k] += static_cast<double>(images[i][k]) * box_length;
  }
  return u;
}

Vec3 minimum_image(Vec3 delta, double box_length) {
  const double half = 0.5 * box_length;
  for (std::size_t k = 0; k < 3; ++k) {
    double d = delta[k] - box_length * std::floor(delta[k] / box_length + 0.5);
    if (d >= half) d -= box_length;
    if (d < -half) d += box_length;
    delta[k] = d;
  }
  return delta;
}

void wrap_positions(SystemState& state) {
  const double box = state.box_length;
  if (state.images.size() != state.positions.size()) {
    state.images.resize(state.positions.size(), ImageCount{0, 0, 0});
  }
  for (std::size_t i = 0; i < state.positions.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double& x = state.positions[i][k];
      if (x >= 0.0 && x < box) continue;
      const double shift = std::floor(x / box);
      x -= shift * box;
      auto crossings = static_cast<std::int32_t>(shift);
      // Rounding can land exactly on the upper face.
      if (x >= box) {
        x -= box;
        ++crossings;
      }
      if (x < 0.0) x = 0.0;
      state.images[i][k] += crossings;
    }
  }
}

SystemState make_state(std::vector<Vec3> positions, double box_length,
                       double mass) {
  SystemState s;
  s.box_length = box_length;
  s.velocities.assign(positions.size(), Vec3{});
  s.masses.assign(positions.size(), mass);
  s.images.assign(positions.size(), ImageCount{0, 0, 0});
  s.positions = std::move(positions);
  wrap_positions(s);
  return s;
}

void validate(const SystemState& state) {
  const std::size_t n = state.size();
  if (state.velocities.size() != n || state.masses.size() != n ||
      state.images.size() != n) {
    throw std::invalid_argument("SystemState arrays have inconsistent lengths");
  }
  if (!(state.box_length > 0.0) || !std::isfinite(state.box_length)) {
    throw std::invalid_argument("box_length must be positive and finite");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(state.positions[i]) || !is_finite(state.velocities[i])) {
      throw NumericalError("non-finite coordinate for atom " + std::to_string(i));
    }
    if (!(state.masses[i] > 0.0)) {
      throw std::invalid_argument("mass must be positive (atom " +
                                  std::to_string(i) + ")");
    }
  }
}

double kinetic_energy(const SystemState& state) {
  double k = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    k += 0.5 * state.masses[i] * dot(state.velocities[i], state.velocities[i]);
  }
  return k;
}

double instantaneous_temperature(const SystemState& state) {
  if (state.size() == 0) return 0.0;
  return 2.0 * kinetic_energy(state) / (3.0 * static_cast<double>(state.size()));
}

Vec3 total_momentum(const SystemState& state) {
  Vec3 p;
  for (std::size_t i = 0; i < state.size(); ++i) {
    p += state.masses[i] * state.velocities[i];
  }
  return p;
}

SystemState lattice_state(std::size_t n_atoms, double density) {
  if (n_atoms == 0 || !(density > 0.0)) {
    throw GeometryError("lattice needs at least one atom and positive density");
  }
  // Basis sites in units of the cubic cell edge: SC, BCC, FCC.
  static const std::vector<Vec3> sc{{0, 0, 0}};
  static const std::vector<Vec3> bcc{{0, 0, 0}, {0.5, 0.5, 0.5}};
  static const std::vector<Vec3> fcc{
      {0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}};
  for (const auto* basis : {&sc, &bcc, &fcc}) {
    const std::size_t b = basis->size();
    if (n_atoms % b != 0) continue;
    const std::size_t cells = n_atoms / b;
    auto n = static_cast<std::size_t>(std::llround(std::cbrt(static_cast<double>(cells))));
    if (n * n * n != cells) continue;
    const double box = std::cbrt(static_cast<double>(n_atoms) / density);
    const double a = box / static_cast<double>(n);
    std::vector<Vec3> pos;
    pos.reserve(n_atoms);
    for (std::size_t ix = 0; ix < n; ++ix)
      for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t iz = 0; iz < n; ++iz)
          for (const Vec3& site : *basis) {
            pos.emplace_back((static_cast<double>(ix) + site[0] + 0.25) * a,
                             (static_cast<double>(iy) + site[1] + 0.25) * a,
                             (static_cast<double>(iz) + site[2] + 0.25) * a);
          }
    return make_state(std::move(pos), box);
  }
  throw GeometryError("n_atoms = " + std::to_string(n_atoms) +
                      " is not b*n^3 for b in {1, 2, 4}");
}

void assign_velocities(SystemState& state, double temperature, Rng& rng) {
  const std::size_t n = state.size();
  if (n == 0) return;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sqrt(temperature / state.masses[i]);
    for (std::size_t k = 0; k < 3; ++k) state.velocities[i][k] = s * gauss(rng);
  }
  double mass = 0.0;
  for (double m : state.masses) mass += m;
  const Vec3 vcm = (1.0 / mass) * total_momentum(state);
  for (auto& v : state.velocities) v -= vcm;
  const double t = instantaneous_temperature(state);
  if (t > 0.0) {
    const double scale = std::sqrt(temperature / t);
    for (auto& v : state.velocities) v *= scale;
  }
}

SystemState replicate(const SystemState& state, int reps) {
  if (reps < 1) throw std::invalid_argument("replicate: reps must be >= 1");
  const double box = state.box_length;
  SystemState out;
  out.box_length = box * reps;
  out.step_count = state.step_count;
  for (int a = 0; a < reps; ++a)
    for (int b = 0; b < reps; ++b)
      for (int c = 0; c < reps; ++c)
        for (std::size_t i = 0; i < state.size(); ++i) {
          out.positions.push_back(state.positions[i] + Vec3(a * box, b * box, c * box));
          out.velocities.push_back(state.velocities[i]);
          out.masses.push_back(state.masses[i]);
          out.images.push_back(ImageCount{0, 0, 0});
        }
  wrap_positions(out);
  return out;
}

}  // namespace flatff
