#include "flatff/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flatff/errors.hpp"
#include "flatff/integrate.hpp"

namespace flatff {

LjParams LjParams::truncated_shifted(double epsilon, double sigma, double cutoff) {
  if (!(epsilon > 0.0) || !(sigma > 0.0) || !(cutoff > sigma)) {
    throw std::invalid_argument("LJ parameters need epsilon, sigma > 0 and cutoff > sigma");
  }
  LjParams p{epsilon, sigma, cutoff, 0.0};
  p.energy_shift = -p.bare_pair_energy(cutoff);
  return p;
}

double LjParams::bare_pair_energy(double r) const {
  const double sr6 = std::pow(sigma / r, 6);
  return 4.0 * epsilon * (sr6 * sr6 - sr6);
}

LennardJones::LennardJones(LjParams params) : params_(params) {}

ForceResult LennardJones::evaluate(const SystemState& state,
                                   const NeighborTable& table) const {
  const double rc2 = params_.cutoff * params_.cutoff;
  const double s2 = params_.sigma * params_.sigma;
  const double eps4 = 4.0 * params_.epsilon;
  const double eps24 = 24.0 * params_.epsilon;
  ForceResult out;
  out.forces.assign(state.size(), Vec3{});
  for (const NeighborPair& p : table.pairs) {
    const Vec3 d = pair_displacement(state, p);
    const double r2 = dot(d, d);
    if (r2 > rc2) continue;
    if (r2 < 1e-12) {
      throw NumericalError("atoms " + std::to_string(p.i) + " and " +
                           std::to_string(p.j) + " overlap");
    }
    const double sr2 = s2 / r2;
    const double sr6 = sr2 * sr2 * sr2;
    const double sr12 = sr6 * sr6;
    out.energy += eps4 * (sr12 - sr6) + params_.energy_shift;
    // Force on j along d; the reaction acts on i.
    const Vec3 fj = (eps24 * (2.0 * sr12 - sr6) / r2) * d;
    out.forces[p.j] += fj;
    out.forces[p.i] -= fj;
  }
  return out;
}

void DatasetSpec::validate() const {
  if (n_train <= 0 || n_val <= 0) {
    throw std::invalid_argument("dataset needs n_train > 0 and n_val > 0");
  }
  if (sample_interval < 1) throw std::invalid_argument("sample_interval must be >= 1");
  if (n_atoms < 1) throw std::invalid_argument("n_atoms must be >= 1");
  if (burn_in_steps < 0) throw std::invalid_argument("burn_in_steps must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
}

SystemState state_from_example(const TrainExample& example) {
  return make_state(example.positions, example.box_length);
}

Dataset generate_dataset(const DatasetSpec& spec, const SimConfig& sim,
                         const LjParams& lj) {
  spec.validate();
  SystemState state = lattice_state(static_cast<std::size_t>(spec.n_atoms), sim.density);
  Rng rng = make_stream(spec.seed, "data");
  assign_velocities(state, spec.temperature, rng);

  NeighborListForces provider(std::make_shared<LennardJones>(lj), sim.skin);
  Frame frame = make_frame(std::move(state), provider);
  Thermostat thermostat = make_thermostat(frame.state.size(), spec.temperature,
                                          sim.dt, sim.thermostat_tau_steps);
  for (std::int64_t s = 0; s < spec.burn_in_steps; ++s) {
    step_nvt(frame, provider, sim.dt, thermostat);
  }

  const std::int64_t total = spec.n_train + spec.n_val;
  std::vector<TrainExample> samples;
  samples.reserve(static_cast<std::size_t>(total));
  while (static_cast<std::int64_t>(samples.size()) < total) {
    for (std::int64_t s = 0; s < spec.sample_interval; ++s) {
      step_nvt(frame, provider, sim.dt, thermostat);
    }
    samples.push_back(TrainExample{frame.state.positions, frame.state.box_length,
                                   frame.forces.energy, frame.forces.forces});
  }

  Dataset out;
  out.spec = spec;
  const auto split = static_cast<std::ptrdiff_t>(spec.n_train);
  out.train.assign(samples.begin(), samples.begin() + split);
  out.val.assign(samples.begin() + split, samples.end());
  return out;
}

}  // namespace flatff
