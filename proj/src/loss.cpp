#include "flatff/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "flatff/errors.hpp"

namespace flatff {

ForceFieldLoss::ForceFieldLoss(const NeuralForceField& model,
                               LossCoefficients coefficients)
    : model_(model), coefficients_(coefficients) {}

PreparedExample ForceFieldLoss::prepare(const TrainExample& example) const {
  const SystemState s = state_from_example(example);
  const NeighborTable table = build_neighbor_table(s, model_.cutoff(), 0.0);
  return PreparedExample{compute_descriptors(s, model_.descriptors(), table),
                         example.energy, example.forces};
}

std::vector<PreparedExample> ForceFieldLoss::prepare(
    std::span<const TrainExample> examples) const {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const TrainExample& e : examples) out.push_back(prepare(e));
  return out;
}

namespace {

std::vector<const PreparedExample*> pointers(std::span<const PreparedExample> batch) {
  std::vector<const PreparedExample*> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back(&e);
  return out;
}

struct BatchScale {
  double examples = 0.0;
  double components = 0.0;
};

BatchScale batch_scale(std::span<const PreparedExample* const> batch) {
  if (batch.empty()) throw std::invalid_argument("loss needs a nonempty batch");
  BatchScale s;
  s.examples = static_cast<double>(batch.size());
  for (const auto* e : batch) s.components += 3.0 * static_cast<double>(e->descriptors.n_atoms);
  return s;
}

void finish(LossValue& v, const LossCoefficients& c) {
  v.coefficients = c;
  v.total = c.energy * v.energy_term + c.force * v.force_term;
}

}  // namespace

LossValue ForceFieldLoss::loss(std::span<const PreparedExample* const> batch,
                               std::span<const double> w) const {
  const BatchScale scale = batch_scale(batch);
  LossValue v;
  for (const auto* e : batch) {
    const ForceResult pred = model_.energy_forces(e->descriptors, w);
    const double n = static_cast<double>(e->descriptors.n_atoms);
    const double de = (pred.energy - e->energy_ref) / n;
    v.energy_term += de * de / scale.examples;
    for (std::size_t a = 0; a < pred.forces.size(); ++a) {
      const Vec3 df = pred.forces[a] - e->force_ref[a];
      v.force_term += dot(df, df) / scale.components;
    }
  }
  finish(v, coefficients_);
  return v;
}

LossValue ForceFieldLoss::loss(std::span<const PreparedExample> batch,
                               std::span<const double> w) const {
  const auto ptrs = pointers(batch);
  return loss(std::span<const PreparedExample* const>(ptrs), w);
}

LossValue ForceFieldLoss::loss_and_gradient(std::span<const PreparedExample* const> batch,
                                            std::span<const double> w,
                                            std::vector<double>& grad) const {
  const BatchScale scale = batch_scale(batch);
  const MlpLayout& layout = model_.layout();
  const auto& norm = model_.normalization();
  grad.assign(layout.size(), 0.0);
  MlpWorkspace ws(layout);
  LossValue v;
  const double ce = coefficients_.energy;
  const double cf = coefficients_.force;

  for (const auto* e : batch) {
    const DescriptorSet& ds = e->descriptors;
    const std::size_t n_atoms = ds.n_atoms;
    const std::size_t nb = ds.n_basis;
    const double n = static_cast<double>(n_atoms);

    // First pass: predictions and dE/dG for every atom.
    const ForceResult pred = model_.energy_forces(ds, w);
    const double de = (pred.energy - e->energy_ref) / n;
    v.energy_term += de * de / scale.examples;
    const double energy_weight = ce * 2.0 * de / (n * scale.examples);

    std::vector<Vec3> residual(n_atoms);
    for (std::size_t a = 0; a < n_atoms; ++a) {
      const Vec3 df = pred.forces[a] - e->force_ref[a];
      v.force_term += dot(df, df) / scale.components;
      residual[a] = (cf * 2.0 / scale.components) * df;
    }

    // dL/d(dE/dG_i): the force residual pulled back through each pair.
    std::vector<double> tangent(n_atoms * nb, 0.0);
    if (cf != 0.0) {
      for (std::size_t p = 0; p < ds.pairs.size(); ++p) {
        const BasisPair& bp = ds.pairs[p];
        const double t = dot(bp.unit, residual[bp.j] - residual[bp.i]);
        const double* dphi = ds.derivative(p);
        double* vi = tangent.data() + bp.i * nb;
        double* vj = tangent.data() + bp.j * nb;
        for (std::size_t k = 0; k < nb; ++k) {
          vi[k] -= dphi[k] * t;
          vj[k] -= dphi[k] * t;
        }
      }
    }

    // Second pass: weight gradient of energy and force terms per atom.
    std::vector<double> x(nb), vx(nb);
    for (std::size_t i = 0; i < n_atoms; ++i) {
      model_.normalized_input(ds, i, x);
      for (std::size_t k = 0; k < nb; ++k) vx[k] = tangent[i * nb + k] / norm.scale[k];
      mlp_weight_gradient(layout, w, x, vx, energy_weight, grad, ws);
    }
  }
  finish(v, coefficients_);
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericalError("loss gradient is not finite");
  }
  return v;
}

LossValue ForceFieldLoss::loss_and_gradient(std::span<const PreparedExample> batch,
                                            std::span<const double> w,
                                            std::vector<double>& grad) const {
  const auto ptrs = pointers(batch);
  return loss_and_gradient(std::span<const PreparedExample* const>(ptrs), w, grad);
}

LossValue loss(std::span<const TrainExample> batch, const NeuralForceField& model,
               std::span<const double> w, LossCoefficients coefficients) {
  const ForceFieldLoss f(model, coefficients);
  return f.loss(f.prepare(batch), w);
}

std::vector<double> loss_gradient(std::span<const TrainExample> batch,
                                  const NeuralForceField& model,
                                  std::span<const double> w,
                                  LossCoefficients coefficients) {
  const ForceFieldLoss f(model, coefficients);
  std::vector<double> grad;
  f.loss_and_gradient(f.prepare(batch), w, grad);
  return grad;
}

}  // namespace flatff
