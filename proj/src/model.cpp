#include "flatff/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flatff/errors.hpp"

namespace flatff {

Normalization fit_normalization(std::span<const TrainExample> examples,
                                const DescriptorConfig& config) {
  const std::size_t nb = config.n_basis();
  std::vector<double> sum(nb, 0.0), sum2(nb, 0.0);
  double count = 0.0;
  for (const TrainExample& e : examples) {
    const SystemState s = state_from_example(e);
    const NeighborTable table = build_neighbor_table(s, config.r_max, 0.0);
    const DescriptorSet ds = compute_descriptors(s, config, table);
    for (std::size_t i = 0; i < ds.n_atoms; ++i) {
      const double* g = ds.atom(i);
      for (std::size_t k = 0; k < nb; ++k) {
        sum[k] += g[k];
        sum2[k] += g[k] * g[k];
      }
      count += 1.0;
    }
  }
  Normalization norm;
  norm.mean.assign(nb, 0.0);
  norm.scale.assign(nb, 1.0);
  if (count == 0.0) return norm;
  for (std::size_t k = 0; k < nb; ++k) {
    const double mean = sum[k] / count;
    const double var = std::max(0.0, sum2[k] / count - mean * mean);
    norm.mean[k] = mean;
    norm.scale[k] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return norm;
}

NeuralForceField::NeuralForceField(DescriptorConfig descriptors, MlpArchitecture arch,
                                   Normalization norm, ParamVector params)
    : descriptors_(std::move(descriptors)),
      arch_(std::move(arch)),
      layout_(arch_),
      norm_(std::move(norm)),
      params_(std::move(params)) {
  descriptors_.validate();
  if (layout_.input_size() != descriptors_.n_basis()) {
    throw std::invalid_argument("MLP input size must equal the number of basis functions");
  }
  if (norm_.mean.size() != descriptors_.n_basis() ||
      norm_.scale.size() != descriptors_.n_basis()) {
    throw std::invalid_argument("normalization size mismatch");
  }
  for (double s : norm_.scale) {
    if (!(s > 0.0)) throw std::invalid_argument("normalization scale must be positive");
  }
  set_params(std::move(params_));
}

void NeuralForceField::set_params(ParamVector params) {
  if (params.size() != layout_.size()) {
    throw std::invalid_argument("expected " + std::to_string(layout_.size()) +
                                " weights, got " + std::to_string(params.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw NumericalError("non-finite network weight");
  }
  params_ = std::move(params);
}

void NeuralForceField::normalized_input(const DescriptorSet& ds, std::size_t i,
                                        std::span<double> x) const {
  const double* g = ds.atom(i);
  for (std::size_t k = 0; k < ds.n_basis; ++k) {
    x[k] = (g[k] - norm_.mean[k]) / norm_.scale[k];
  }
}

AtomicPass NeuralForceField::atomic_pass(const DescriptorSet& ds,
                                         std::span<const double> w) const {
  const std::size_t nb = ds.n_basis;
  AtomicPass out;
  out.input_grad.assign(ds.n_atoms * nb, 0.0);
  MlpWorkspace ws(layout_);
  std::vector<double> x(nb);
  for (std::size_t i = 0; i < ds.n_atoms; ++i) {
    normalized_input(ds, i, x);
    std::span<double> u(out.input_grad.data() + i * nb, nb);
    out.energy += mlp_input_gradient(layout_, w, x, u, ws);
    for (std::size_t k = 0; k < nb; ++k) u[k] /= norm_.scale[k];
  }
  return out;
}

ForceResult NeuralForceField::energy_forces(const DescriptorSet& ds,
                                            std::span<const double> w) const {
  const std::size_t nb = ds.n_basis;
  const AtomicPass pass = atomic_pass(ds, w);
  ForceResult out;
  out.energy = pass.energy;
  out.forces.assign(ds.n_atoms, Vec3{});
  for (std::size_t p = 0; p < ds.pairs.size(); ++p) {
    const BasisPair& bp = ds.pairs[p];
    const double* dphi = ds.derivative(p);
    const double* ui = pass.input_grad.data() + bp.i * nb;
    const double* uj = pass.input_grad.data() + bp.j * nb;
    double c = 0.0;
    for (std::size_t k = 0; k < nb; ++k) c += (ui[k] + uj[k]) * dphi[k];
    const Vec3 f = c * bp.unit;
    out.forces[bp.i] += f;
    out.forces[bp.j] -= f;
  }
  if (!std::isfinite(out.energy)) throw NumericalError("network energy is not finite");
  for (std::size_t i = 0; i < out.forces.size(); ++i) {
    if (!is_finite(out.forces[i])) {
      throw NumericalError("network force on atom " + std::to_string(i) + " is not finite");
    }
  }
  return out;
}

ForceResult NeuralForceField::energy_forces(const SystemState& state,
                                            std::span<const double> w,
                                            const NeighborTable& table) const {
  return energy_forces(compute_descriptors(state, descriptors_, table), w);
}

ForceResult NeuralForceField::evaluate(const SystemState& state,
                                       const NeighborTable& table) const {
  return energy_forces(state, params_, table);
}

NeuralForceField make_initial_model(std::span<const TrainExample> train,
                                    const DescriptorConfig& descriptors,
                                    std::vector<std::size_t> hidden, Rng& rng) {
  MlpArchitecture arch;
  arch.layer_sizes.clear();
  arch.layer_sizes.push_back(descriptors.n_basis());
  for (std::size_t h : hidden) arch.layer_sizes.push_back(h);
  arch.layer_sizes.push_back(1);
  const MlpLayout layout(arch);
  ParamVector w = init_params(layout, rng);
  double per_atom = 0.0;
  for (const TrainExample& e : train) {
    per_atom += e.energy / static_cast<double>(e.size());
  }
  if (!train.empty()) per_atom /= static_cast<double>(train.size());
  w[layout.bias_offset(layout.layers() - 1)] = per_atom;
  return NeuralForceField(descriptors, arch, fit_normalization(train, descriptors),
                          std::move(w));
}

}  // namespace flatff
