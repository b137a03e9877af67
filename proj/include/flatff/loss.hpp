#pragma once

#include <span>
#include <vector>

#include "flatff/model.hpp"

namespace flatff {

/// Table defaults: (force, total energy) = (1.0, 1.0).
struct LossCoefficients {
  double energy = 1.0;
  double force = 1.0;
};

/// total = c_E * energy_term + c_F * force_term.
/// energy_term = mean over examples of ((E - E_ref) / N)^2
/// force_term  = mean over examples, atoms and components of (f - f_ref)^2
struct LossValue {
  double total = 0.0;
  double energy_term = 0.0;
  double force_term = 0.0;
  LossCoefficients coefficients;
};

/// Example with its descriptors precomputed; positions never change during
/// training so this is done once per example.
struct PreparedExample {
  DescriptorSet descriptors;
  double energy_ref = 0.0;
  std::vector<Vec3> force_ref;
};

/// Loss and exact weight gradient of a force field over batches.
class ForceFieldLoss {
 public:
  ForceFieldLoss(const NeuralForceField& model, LossCoefficients coefficients);

  PreparedExample prepare(const TrainExample& example) const;
  std::vector<PreparedExample> prepare(std::span<const TrainExample> examples) const;

  LossValue loss(std::span<const PreparedExample> batch, std::span<const double> w) const;
  LossValue loss(std::span<const PreparedExample* const> batch,
                 std::span<const double> w) const;

  /// Writes the gradient of the total loss into `grad` (resized and zeroed).
  LossValue loss_and_gradient(std::span<const PreparedExample* const> batch,
                              std::span<const double> w,
                              std::vector<double>& grad) const;
  LossValue loss_and_gradient(std::span<const PreparedExample> batch,
                              std::span<const double> w,
                              std::vector<double>& grad) const;

  const NeuralForceField& model() const { return model_; }
  const LossCoefficients& coefficients() const { return coefficients_; }

 private:
  NeuralForceField model_;
  LossCoefficients coefficients_;
};

LossValue loss(std::span<const TrainExample> batch, const NeuralForceField& model,
               std::span<const double> w, LossCoefficients coefficients = {});

std::vector<double> loss_gradient(std::span<const TrainExample> batch,
                                  const NeuralForceField& model,
                                  std::span<const double> w,
                                  LossCoefficients coefficients = {});

}  // namespace flatff
