#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "flatff/neighbor.hpp"
#include "flatff/system.hpp"

namespace flatff {

struct ForceResult {
  double energy = 0.0;
  std::vector<Vec3> forces;
};

/// Energy model with a finite interaction range.
class Potential {
 public:
  virtual ~Potential() = default;
  virtual double cutoff() const = 0;
  /// `table` must be current for `state` and built at cutoff() or beyond.
  virtual ForceResult evaluate(const SystemState& state,
                               const NeighborTable& table) const = 0;
};

/// Supplies forces for the current positions of a trajectory. Implementations
/// may keep per-trajectory caches (neighbor tables, domain layouts).
class ForceProvider {
 public:
  virtual ~ForceProvider() = default;
  virtual ForceResult compute(const SystemState& state) = 0;
};

/// Drives a Potential through a Verlet neighbor table that is rebuilt when an
/// atom moves half the skin.
class NeighborListForces final : public ForceProvider {
 public:
  NeighborListForces(std::shared_ptr<const Potential> potential, double skin);

  ForceResult compute(const SystemState& state) override;

  const NeighborTable& table() const { return table_; }
  std::size_t rebuilds() const { return rebuilds_; }
  std::size_t evaluations() const { return evaluations_; }

 private:
  std::shared_ptr<const Potential> potential_;
  double skin_;
  NeighborTable table_;
  bool built_ = false;
  std::size_t rebuilds_ = 0;
  std::size_t evaluations_ = 0;
};

/// Potential energy via a freshly built table; no state is modified.
ForceResult evaluate_fresh(const SystemState& state, const Potential& potential);

/// Kinetic plus potential energy.
double total_energy(const SystemState& state, const Potential& potential);

}  // namespace flatff
