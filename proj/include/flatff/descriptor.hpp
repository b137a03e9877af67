#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flatff/neighbor.hpp"
#include "flatff/system.hpp"

namespace flatff {

/// Gaussian radial basis with a cosine cutoff:
///   G_k(i) = sum_j exp(-(r_ij - c_k)^2 / (2 w^2)) * f_c(r_ij)
///   f_c(r) = (cos(pi r / r_max) + 1) / 2 for r < r_max, else 0
struct DescriptorConfig {
  double r_max = 2.5;
  std::vector<double> centers;
  double width = 0.2;

  std::size_t n_basis() const { return centers.size(); }
  void validate() const;

  /// n centers spaced evenly from `first_center` towards r_max (exclusive),
  /// width equal to the spacing.
  static DescriptorConfig uniform(std::size_t n_basis = 8, double first_center = 0.8,
                                  double r_max = 2.5);
};

double smooth_cutoff(double r, double r_max);
double smooth_cutoff_derivative(double r, double r_max);

/// phi_k(r) and d phi_k / dr for every basis function.
void radial_basis(const DescriptorConfig& config, double r, double* phi, double* dphi);

/// A pair inside r_max, with the unit vector pointing from i to j.
struct BasisPair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double r = 0.0;
  Vec3 unit;
};

/// Descriptors of every atom plus the radial derivatives needed for forces.
struct DescriptorSet {
  std::size_t n_atoms = 0;
  std::size_t n_basis = 0;
  std::vector<double> values;             // n_atoms x n_basis
  std::vector<BasisPair> pairs;
  std::vector<double> basis_derivative;   // pairs x n_basis, d phi_k / dr

  const double* atom(std::size_t i) const { return values.data() + i * n_basis; }
  const double* derivative(std::size_t p) const {
    return basis_derivative.data() + p * n_basis;
  }
};

/// NumericalError if two atoms are closer than 1e-6.
DescriptorSet compute_descriptors(const SystemState& state,
                                  const DescriptorConfig& config,
                                  const NeighborTable& table);

std::vector<double> describe(const SystemState& state, std::size_t atom_index,
                             const DescriptorConfig& config,
                             const NeighborTable& table);

}  // namespace flatff
