#include "flatff/potential.hpp"

#include <stdexcept>

namespace flatff {

NeighborListForces::NeighborListForces(std::shared_ptr<const Potential> potential,
                                       double skin)
    : potential_(std::move(potential)), skin_(skin) {
  if (!potential_) throw std::invalid_argument("NeighborListForces: null potential");
}

ForceResult NeighborListForces::compute(const SystemState& state) {
  if (!built_ || needs_rebuild(table_, state)) {
    table_ = build_neighbor_table(state, potential_->cutoff(), skin_);
    built_ = true;
    ++rebuilds_;
  }
  ++evaluations_;
  return potential_->evaluate(state, table_);
}

ForceResult evaluate_fresh(const SystemState& state, const Potential& potential) {
  const NeighborTable table = build_neighbor_table(state, potential.cutoff(), 0.0);
  return potential.evaluate(state, table);
}

double total_energy(const SystemState& state, const Potential& potential) {
  return kinetic_energy(state) + evaluate_fresh(state, potential).energy;
}

}  // namespace flatff
