#pragma once

#include <cstdint>
#include <vector>

#include "flatff/potential.hpp"
#include "flatff/system.hpp"

namespace flatff {

/// Truncated-and-shifted Lennard-Jones parameters; V(cutoff) = 0 exactly.
struct LjParams {
  double epsilon = 1.0;
  double sigma = 1.0;
  double cutoff = 2.5;
  double energy_shift = 0.0;

  static LjParams truncated_shifted(double epsilon = 1.0, double sigma = 1.0,
                                    double cutoff = 2.5);
  /// 4 eps [(s/r)^12 - (s/r)^6] without the shift.
  double bare_pair_energy(double r) const;
};

/// Ground-truth potential the networks are trained to reproduce.
class LennardJones final : public Potential {
 public:
  explicit LennardJones(LjParams params);

  double cutoff() const override { return params_.cutoff; }
  /// NumericalError if any pair is closer than 1e-6.
  ForceResult evaluate(const SystemState& state,
                       const NeighborTable& table) const override;

  const LjParams& params() const { return params_; }

 private:
  LjParams params_;
};

/// One labelled configuration.
struct TrainExample {
  std::vector<Vec3> positions;
  double box_length = 0.0;
  double energy = 0.0;
  std::vector<Vec3> forces;

  std::size_t size() const { return positions.size(); }
};

struct DatasetSpec {
  std::int64_t n_train = 2000;
  std::int64_t n_val = 200;
  std::int64_t n_atoms = 64;
  std::int64_t sample_interval = 50;
  double temperature = 0.7;
  std::uint64_t seed = 1;
  std::int64_t burn_in_steps = 5000;

  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<TrainExample> train;
  std::vector<TrainExample> val;
};

/// Samples an NVT trajectory of the oracle from a lattice start. After the
/// burn-in, one example is kept every sample_interval steps; the last n_val
/// examples form the validation split.
Dataset generate_dataset(const DatasetSpec& spec, const SimConfig& sim,
                         const LjParams& lj);

/// Atoms at rest with unit masses at the example's positions.
SystemState state_from_example(const TrainExample& example);

}  // namespace flatff
