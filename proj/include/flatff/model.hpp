#pragma once

#include <span>
#include <vector>

#include "flatff/descriptor.hpp"
#include "flatff/mlp.hpp"
#include "flatff/oracle.hpp"
#include "flatff/potential.hpp"

namespace flatff {

/// Per-component affine standardisation of descriptors, x = (G - mean) / scale.
/// Fitted on the training set and frozen into the checkpoint.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;
};

Normalization fit_normalization(std::span<const TrainExample> examples,
                                const DescriptorConfig& config);

/// Atomic energies from the descriptors; E = sum_i MLP(x_i).
struct AtomicPass {
  double energy = 0.0;
  std::vector<double> input_grad;  // n_atoms x n_basis, dE/dG (raw descriptors)
};

/// Neural-network force field: descriptor -> shared MLP -> atomic energy.
class NeuralForceField final : public Potential {
 public:
  NeuralForceField(DescriptorConfig descriptors, MlpArchitecture arch,
                   Normalization norm, ParamVector params);

  double cutoff() const override { return descriptors_.r_max; }
  ForceResult evaluate(const SystemState& state,
                       const NeighborTable& table) const override;

  /// Same as evaluate() but with an explicit weight vector.
  ForceResult energy_forces(const SystemState& state, std::span<const double> w,
                            const NeighborTable& table) const;
  ForceResult energy_forces(const DescriptorSet& ds, std::span<const double> w) const;

  AtomicPass atomic_pass(const DescriptorSet& ds, std::span<const double> w) const;
  /// Normalised input of atom i written to `x`.
  void normalized_input(const DescriptorSet& ds, std::size_t i,
                        std::span<double> x) const;

  const DescriptorConfig& descriptors() const { return descriptors_; }
  const MlpArchitecture& architecture() const { return arch_; }
  const MlpLayout& layout() const { return layout_; }
  const Normalization& normalization() const { return norm_; }
  const ParamVector& params() const { return params_; }
  void set_params(ParamVector params);

 private:
  DescriptorConfig descriptors_;
  MlpArchitecture arch_;
  MlpLayout layout_;
  Normalization norm_;
  ParamVector params_;
};

/// Fresh model for a training set: descriptor statistics, Glorot weights and
/// an output bias equal to the mean per-atom reference energy.
NeuralForceField make_initial_model(std::span<const TrainExample> train,
                                    const DescriptorConfig& descriptors,
                                    std::vector<std::size_t> hidden, Rng& rng);

}  // namespace flatff
