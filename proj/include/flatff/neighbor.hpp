#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flatff/system.hpp"

namespace flatff {

/// One interacting image pair. The separation is
/// `unwrapped(j) - unwrapped(i) + shift * L`, which stays continuous while
/// atoms wrap between rebuilds.
struct NeighborPair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  ImageCount shift{};
};

/// Half pair list (i < j) covering every periodic image within cutoff + skin.
///
/// When cutoff + skin < L/2 this is exactly the minimum-image pair set and
/// every (i, j) appears once. Smaller boxes get one entry per interacting
/// image, so a 64-atom liquid with a 2.5 sigma cutoff is still a proper
/// periodic system.
struct NeighborTable {
  double cutoff = 0.0;
  double skin = 0.0;
  double box_length = 0.0;
  std::vector<NeighborPair> pairs;
  std::vector<Vec3> build_positions;  // unwrapped, at build time
};

/// Linked-cell construction with cell edge >= cutoff + skin. GeometryError if
/// cutoff + skin >= L (an atom would interact with its own image).
NeighborTable build_neighbor_table(const SystemState& state, double cutoff,
                                   double skin);

/// True iff some atom moved at least skin/2 since the table was built.
bool needs_rebuild(const NeighborTable& table, const SystemState& state);

inline Vec3 pair_displacement(const SystemState& state, const NeighborPair& p) {
  const double box = state.box_length;
  Vec3 d = state.positions[p.j] - state.positions[p.i];
  const auto& ii = state.images[p.i];
  const auto& ij = state.images[p.j];
  for (std::size_t k = 0; k < 3; ++k) {
    d[k] += static_cast<double>(ij[k] - ii[k] + p.shift[k]) * box;
  }
  return d;
}

}  // namespace flatff
