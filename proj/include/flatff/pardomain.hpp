#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "flatff/potential.hpp"
#include "flatff/system.hpp"

namespace flatff {

using GridDims = std::array<int, 3>;

/// Regular px * py * pz tiling of the periodic box. Domain d covers
/// (lower, upper] along each axis, except that the first layer also owns the
/// face at 0; an atom on an internal boundary belongs to the lower domain.
struct DomainGrid {
  GridDims dims{1, 1, 1};
  double box_length = 0.0;
  double ghost_width = 0.0;

  int count() const { return dims[0] * dims[1] * dims[2]; }
  double edge(int axis) const { return box_length / dims[axis]; }
  GridDims coords(int domain) const;
  /// Coordinates are wrapped periodically.
  int index(GridDims c) const;
  Vec3 lower(int domain) const;
  Vec3 upper(int domain) const;
  /// Domain owning a wrapped position.
  int locate(const Vec3& position) const;
  /// Distinct domains within one layer in every direction, ascending, the
  /// domain itself included.
  std::vector<int> neighbors(int domain) const;
};

/// Balanced factorisation of P into three axes, largest factor first.
GridDims dims_for_workers(int workers);

struct Decomposition {
  DomainGrid grid;
  std::vector<std::vector<std::uint32_t>> owned;  // ascending atom indices
  std::vector<int> owner;
};

/// ghost_width = cutoff + skin. GeometryError unless every domain edge is at
/// least 2 * (cutoff + skin).
Decomposition decompose(const SystemState& state, GridDims dims, double cutoff,
                        double skin);

/// A copy of atom `index` placed at positions[index] + shift * L.
struct GhostAtom {
  std::uint32_t index = 0;
  ImageCount shift{};
  Vec3 position;
};

/// Outbound lists of one domain, one per neighbor in DomainGrid::neighbors order.
struct GhostRoutes {
  std::vector<int> targets;
  std::vector<std::vector<GhostAtom>> atoms;
};

/// Every image of an owned atom that lies within ghost_width of a neighbor's
/// region (the owner's own unshifted copy excluded).
GhostRoutes plan_ghost_routes(const Decomposition& decomposition, const SystemState& state,
                              int domain);

/// One worker per domain sends its routes and receives its neighbors'. Each
/// domain's ghosts are ordered by sender, then by the sender's route order.
std::vector<std::vector<GhostAtom>> exchange_ghosts(const Decomposition& decomposition,
                                                    const SystemState& state);

/// Force provider running one worker thread per domain. Ownership and ghost
/// routes are fixed between rebuilds (an atom moving skin/2); positions and,
/// for network models, per-atom energy gradients travel as messages every
/// evaluation. Partial energies are reduced in domain order. A 1x1x1 grid
/// uses the serial neighbor-list path.
///
/// Supports LennardJones and NeuralForceField.
class ParallelForces final : public ForceProvider {
 public:
  ParallelForces(std::shared_ptr<const Potential> potential, GridDims dims, double skin);
  ~ParallelForces() override;

  ForceResult compute(const SystemState& state) override;

  const Decomposition& decomposition() const { return decomposition_; }
  std::size_t rebuilds() const { return rebuilds_; }

  struct DomainWork;

 private:
  void rebuild(const SystemState& state);

  std::shared_ptr<const Potential> potential_;
  GridDims dims_;
  double skin_;
  NeighborListForces serial_;
  Decomposition decomposition_;
  std::vector<Vec3> build_unwrapped_;
  std::vector<ImageCount> build_images_;
  std::vector<std::unique_ptr<DomainWork>> work_;
  bool built_ = false;
  std::size_t rebuilds_ = 0;
};

/// One-shot evaluation on a fresh decomposition.
ForceResult parallel_forces(std::shared_ptr<const Potential> potential,
                            const SystemState& state, GridDims dims, double skin = 0.0);

struct ScalingRow {
  int workers = 1;
  std::size_t atoms = 0;
  double ms_per_step = 0.0;
  double speed = 0.0;  // atom-steps per second
  double efficiency = 0.0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
};

/// For each P, a lattice of about base_atoms_per_domain * P atoms (the
/// nearest size the lattice builder supports) is integrated for `steps` NVE
/// steps with ParallelForces. efficiency = speed(P) / (P * speed(1)); the
/// single-worker reference is measured even when 1 is not requested.
ScalingReport weak_scaling_bench(std::shared_ptr<const Potential> potential,
                                 std::size_t base_atoms_per_domain,
                                 std::span<const int> worker_counts, std::int64_t steps,
                                 const SimConfig& sim, std::uint64_t seed);

/// Nearest b * n^3 (b in 1, 2, 4) to `target`.
std::size_t nearest_lattice_size(std::size_t target);

/// CSV: P,atoms,ms_per_step,speed,efficiency
void write_scaling_csv(std::ostream& out, const ScalingReport& report);

}  // namespace flatff
