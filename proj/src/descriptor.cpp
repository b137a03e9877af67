#include "flatff/descriptor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "flatff/errors.hpp"

namespace flatff {

void DescriptorConfig::validate() const {
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  if (centers.empty()) throw std::invalid_argument("descriptor needs at least one center");
  if (!(width > 0.0)) throw std::invalid_argument("descriptor width must be positive");
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (!(centers[k] > 0.0) || !(centers[k] < r_max)) {
      throw std::invalid_argument("descriptor centers must lie in (0, r_max)");
    }
    if (k > 0 && !(centers[k] > centers[k - 1])) {
      throw std::invalid_argument("descriptor centers must be strictly increasing");
    }
  }
}

DescriptorConfig DescriptorConfig::uniform(std::size_t n_basis, double first_center,
                                           double r_max) {
  if (n_basis == 0) throw std::invalid_argument("n_basis must be >= 1");
  DescriptorConfig c;
  c.r_max = r_max;
  const double spacing = (r_max - first_center) / static_cast<double>(n_basis);
  for (std::size_t k = 0; k < n_basis; ++k) {
    c.centers.push_back(first_center + spacing * static_cast<double>(k));
  }
  c.width = spacing;
  c.validate();
  return c;
}

double smooth_cutoff(double r, double r_max) {
  if (r >= r_max) return 0.0;
  return 0.5 * (std::cos(std::numbers::pi * r / r_max) + 1.0);
}

double smooth_cutoff_derivative(double r, double r_max) {
  if (r >= r_max) return 0.0;
  return -0.5 * std::numbers::pi / r_max * std::sin(std::numbers::pi * r / r_max);
}

void radial_basis(const DescriptorConfig& config, double r, double* phi, double* dphi) {
  const double fc = smooth_cutoff(r, config.r_max);
  const double dfc = smooth_cutoff_derivative(r, config.r_max);
  const double inv_w2 = 1.0 / (config.width * config.width);
  for (std::size_t k = 0; k < config.centers.size(); ++k) {
    const double u = r - config.centers[k];
    const double g = std::exp(-0.5 * u * u * inv_w2);
    phi[k] = g * fc;
    dphi[k] = g * (dfc - u * inv_w2 * fc);
  }
}

DescriptorSet compute_descriptors(const SystemState& state,
                                  const DescriptorConfig& config,
                                  const NeighborTable& table) {
  const std::size_t nb = config.n_basis();
  DescriptorSet ds;
  ds.n_atoms = state.size();
  ds.n_basis = nb;
  ds.values.assign(ds.n_atoms * nb, 0.0);
  ds.pairs.reserve(table.pairs.size());
  ds.basis_derivative.reserve(table.pairs.size() * nb);

  const double r_max = config.r_max;
  std::vector<double> phi(nb);
  for (const NeighborPair& p : table.pairs) {
    const Vec3 d = pair_displacement(state, p);
    const double r2 = dot(d, d);
    if (r2 >= r_max * r_max) continue;
    const double r = std::sqrt(r2);
    if (r < 1e-6) {
      throw NumericalError("atoms " + std::to_string(p.i) + " and " +
                           std::to_string(p.j) + " overlap");
    }
    double* gi = ds.values.data() + p.i * nb;
    double* gj = ds.values.data() + p.j * nb;
    const std::size_t base = ds.basis_derivative.size();
    ds.basis_derivative.resize(base + nb);
    radial_basis(config, r, phi.data(), ds.basis_derivative.data() + base);
    for (std::size_t k = 0; k < nb; ++k) {
      gi[k] += phi[k];
      gj[k] += phi[k];
    }
    ds.pairs.push_back(BasisPair{p.i, p.j, r, (1.0 / r) * d});
  }
  return ds;
}

std::vector<double> describe(const SystemState& state, std::size_t atom_index,
                             const DescriptorConfig& config,
                             const NeighborTable& table) {
  if (atom_index >= state.size()) throw std::out_of_range("atom index out of range");
  const DescriptorSet ds = compute_descriptors(state, config, table);
  return {ds.atom(atom_index), ds.atom(atom_index) + ds.n_basis};
}

}  // namespace flatff
