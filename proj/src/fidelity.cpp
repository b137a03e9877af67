#include "flatff/fidelity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "flatff/errors.hpp"
#include "flatff/integrate.hpp"
#include "flatff/rng.hpp"
#include "json_util.hpp"

namespace flatff {

void TtfProtocol::validate() const {
  if (n_atoms < 1) throw std::invalid_argument("ttf.n_atoms must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("ttf.temperature must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("ttf.dt must be > 0");
  if (!(density > 0.0)) throw std::invalid_argument("ttf.density must be > 0");
  if (!(skin > 0.0)) throw std::invalid_argument("ttf.skin must be > 0");
  if (premelt_steps < 0) throw std::invalid_argument("ttf.premelt_steps must be >= 0");
  if (nvt_steps < 0) throw std::invalid_argument("ttf.nvt_steps must be >= 0");
  if (max_steps <= nvt_steps) {
    throw std::invalid_argument("ttf.max_steps must exceed ttf.nvt_steps");
  }
  if (!(energy_drift_tol > 0.0)) throw std::invalid_argument("ttf.energy_drift_tol must be > 0");
  if (check_interval < 1) throw std::invalid_argument("ttf.check_interval must be >= 1");
  if (!(displacement_safety > 0.0)) {
    throw std::invalid_argument("ttf.displacement_safety must be > 0");
  }
  if (overlap_distance < 0.0) throw std::invalid_argument("ttf.overlap_distance must be >= 0");
  if (!(outlier_sigma > 0.0)) throw std::invalid_argument("ttf.outlier_sigma must be > 0");
  if (outlier_interval < 1) throw std::invalid_argument("ttf.outlier_interval must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("ttf.seeds must not be empty");
}

std::string to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::non_finite: return "non_finite";
    case FailureReason::displacement_blowup: return "displacement_blowup";
    case FailureReason::atom_overlap: return "atom_overlap";
    case FailureReason::energy_drift: return "energy_drift";
    case FailureReason::censored: return "censored";
  }
  return "censored";
}

FailureReason failure_from_string(const std::string& name) {
  if (name == "non_finite") return FailureReason::non_finite;
  if (name == "displacement_blowup") return FailureReason::displacement_blowup;
  if (name == "atom_overlap") return FailureReason::atom_overlap;
  if (name == "energy_drift") return FailureReason::energy_drift;
  if (name == "censored") return FailureReason::censored;
  throw std::invalid_argument("unknown failure reason: " + name);
}

namespace {

/// Closest pair in the provider's table (which covers every pair within the
/// cutoff), or infinity when none is listed.
double closest_pair(const SystemState& state, const NeighborTable& table) {
  double best2 = std::numeric_limits<double>::infinity();
  for (const NeighborPair& p : table.pairs) {
    const Vec3 d = pair_displacement(state, p);
    best2 = std::min(best2, dot(d, d));
  }
  return std::sqrt(best2);
}

double force_measure(const Vec3& f, BaselineMeasure measure) {
  if (measure == BaselineMeasure::force_norm) return norm(f);
  return std::max({std::abs(f[0]), std::abs(f[1]), std::abs(f[2])});
}

}  // namespace

ForceBaseline compute_force_baseline(std::span<const std::vector<Vec3>> force_sets,
                                     std::string source, BaselineMeasure measure) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& set : force_sets) {
    for (const Vec3& f : set) {
      sum += force_measure(f, measure);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("force baseline needs at least one atom");
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& set : force_sets) {
    for (const Vec3& f : set) {
      const double d = force_measure(f, measure) - mean;
      var += d * d;
    }
  }
  const double sigma = std::sqrt(var / static_cast<double>(n));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("force baseline has zero spread");
  }
  return ForceBaseline{mean, sigma, std::move(source), measure};
}

ForceBaseline compute_force_baseline(std::span<const TrainExample> dataset,
                                     BaselineMeasure measure) {
  std::vector<std::vector<Vec3>> sets;
  sets.reserve(dataset.size());
  for (const TrainExample& ex : dataset) sets.push_back(ex.forces);
  return compute_force_baseline(sets, "training_set", measure);
}

std::int64_t count_outliers(std::span<const Vec3> forces, const ForceBaseline& baseline,
                            double k) {
  if (!(k > 0.0)) throw std::invalid_argument("outlier threshold k must be > 0");
  const double threshold = baseline.mean_force_norm + k * baseline.sigma_force_norm;
  std::int64_t count = 0;
  for (const Vec3& f : forces) {
    if (force_measure(f, baseline.measure) > threshold) ++count;
  }
  return count;
}

std::optional<FailureReason> detect_failure(const StepObservation& obs,
                                            double initial_nve_energy,
                                            const TtfProtocol& protocol) {
  const SystemState& s = obs.state;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_finite(s.positions[i]) || !is_finite(s.velocities[i])) {
      return FailureReason::non_finite;
    }
  }
  for (const Vec3& f : obs.forces.forces) {
    if (!is_finite(f)) return FailureReason::non_finite;
  }
  if (!std::isfinite(obs.forces.energy)) return FailureReason::non_finite;

  if (!obs.previous_unwrapped.empty()) {
    const double limit = 0.5 * protocol.skin * protocol.displacement_safety;
    const double limit2 = limit * limit;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec3 d = s.unwrapped(i) - obs.previous_unwrapped[i];
      if (dot(d, d) > limit2) return FailureReason::displacement_blowup;
    }
  }

  if (obs.min_pair_distance < protocol.overlap_distance) return FailureReason::atom_overlap;

  if (obs.nve_step > 0 && obs.nve_step % protocol.check_interval == 0) {
    const double e = kinetic_energy(s) + obs.forces.energy;
    const double scale = initial_nve_energy != 0.0 ? std::abs(initial_nve_energy) : 1.0;
    if (!std::isfinite(e)) return FailureReason::non_finite;
    if (std::abs(e - initial_nve_energy) / scale > protocol.energy_drift_tol) {
      return FailureReason::energy_drift;
    }
  }
  return std::nullopt;
}

TtfRecord run_ttf(std::shared_ptr<const Potential> model, const TtfProtocol& protocol,
                  const ForceBaseline& baseline, std::uint64_t seed) {
  protocol.validate();
  TtfRecord record;
  record.n_atoms = protocol.n_atoms;
  record.seed = seed;
  const std::int64_t budget = protocol.max_steps - protocol.nvt_steps;

  SystemState state =
      lattice_state(static_cast<std::size_t>(protocol.n_atoms), protocol.density);
  Rng rng = make_stream(seed, "ttf", static_cast<std::uint64_t>(protocol.n_atoms));
  assign_velocities(state, protocol.temperature, rng);
  if (protocol.premelt_steps > 0) {
    NeighborListForces reference(std::make_shared<LennardJones>(protocol.premelt_potential),
                                 protocol.skin);
    Frame melt = make_frame(std::move(state), reference);
    Thermostat t = make_thermostat(melt.state.size(), protocol.temperature, protocol.dt,
                                   protocol.thermostat_tau_steps);
    for (std::int64_t step = 0; step < protocol.premelt_steps; ++step) {
      step_nvt(melt, reference, protocol.dt, t);
    }
    state = std::move(melt.state);
    state.step_count = 0;
  }

  NeighborListForces provider(std::move(model), protocol.skin);
  auto fail_at = [&](std::int64_t survived, FailureReason reason) {
    record.steps_survived = survived;
    record.failure_reason = reason;
    return record;
  };

  Frame frame;
  try {
    frame = make_frame(std::move(state), provider);
  } catch (const NumericalError&) {
    return fail_at(0, FailureReason::non_finite);
  }

  std::vector<std::vector<Vec3>> nvt_forces;
  Thermostat thermostat = make_thermostat(frame.state.size(), protocol.temperature,
                                          protocol.dt, protocol.thermostat_tau_steps);
  for (std::int64_t step = 1; step <= protocol.nvt_steps; ++step) {
    try {
      step_nvt(frame, provider, protocol.dt, thermostat);
    } catch (const NumericalError&) {
      return fail_at(0, FailureReason::non_finite);
    }
    if (protocol.baseline_source == BaselineSource::thermalization &&
        step % protocol.outlier_interval == 0) {
      nvt_forces.push_back(frame.forces.forces);
    }
  }

  ForceBaseline active = baseline;
  if (protocol.baseline_source == BaselineSource::thermalization) {
    if (nvt_forces.empty()) nvt_forces.push_back(frame.forces.forces);
    active = compute_force_baseline(nvt_forces, "thermalization", protocol.baseline_measure);
  }

  const double e0 = kinetic_energy(frame.state) + frame.forces.energy;
  if (!std::isfinite(e0)) return fail_at(0, FailureReason::non_finite);
  auto sample = [&](std::int64_t step) {
    record.outlier_series.push_back(
        {step, count_outliers(frame.forces.forces, active, protocol.outlier_sigma)});
  };
  sample(0);

  std::vector<Vec3> previous(frame.state.size());
  for (std::int64_t step = 1; step <= budget; ++step) {
    for (std::size_t i = 0; i < previous.size(); ++i) previous[i] = frame.state.unwrapped(i);
    try {
      step_nve(frame, provider, protocol.dt);
    } catch (const NumericalError&) {
      return fail_at(step - 1, FailureReason::non_finite);
    }
    StepObservation obs{frame.state, frame.forces, previous, step};
    if (protocol.overlap_distance > 0.0) {
      obs.min_pair_distance = closest_pair(frame.state, provider.table());
    }
    const auto reason = detect_failure(obs, e0, protocol);
    if (reason || step % protocol.outlier_interval == 0) sample(step);
    if (reason) return fail_at(step - 1, *reason);
  }
  return fail_at(budget, FailureReason::censored);
}

std::vector<TtfRecord> run_ttf_series(std::shared_ptr<const Potential> model,
                                      const TtfProtocol& protocol,
                                      std::span<const std::int64_t> sizes,
                                      const ForceBaseline& baseline, int workers) {
  protocol.validate();
  struct Job {
    std::int64_t n_atoms;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::int64_t n : sizes) {
    for (std::uint64_t s : protocol.seeds) jobs.push_back({n, s});
  }
  std::vector<TtfRecord> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        TtfProtocol p = protocol;
        p.n_atoms = jobs[k].n_atoms;
        out[k] = run_ttf(model, p, baseline, jobs[k].seed);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n_threads =
      std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

FitResult fit_power_law(std::span<const FitPoint> points) {
  std::vector<std::pair<double, double>> xy;
  for (const FitPoint& p : points) {
    if (p.n_atoms > 0.0 && p.mean_steps > 0.0 && std::isfinite(p.mean_steps)) {
      xy.emplace_back(std::log(p.n_atoms), std::log(p.mean_steps));
    }
  }
  std::sort(xy.begin(), xy.end());
  const bool distinct =
      xy.size() >= 2 && std::adjacent_find(xy.begin(), xy.end(), [](auto& a, auto& b) {
                          return a.first == b.first;
                        }) == xy.end();
  if (!distinct) throw FitError("power-law fit needs at least two distinct usable sizes");

  const double n = static_cast<double>(xy.size());
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ssr = 0.0;
  for (auto [x, y] : xy) {
    const double r = y - (intercept + slope * x);
    ssr += r * r;
  }

  FitResult fit;
  fit.alpha = std::exp(intercept);
  fit.beta = -slope;
  fit.n_points = static_cast<std::int64_t>(xy.size());
  fit.beta_stderr = xy.size() > 2 ? std::sqrt(ssr / (n - 2.0) / sxx)
                                  : std::numeric_limits<double>::quiet_NaN();
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

std::vector<FitPoint> mean_survival(std::span<const TtfRecord> records,
                                    std::int64_t* censored_count) {
  std::map<std::int64_t, std::pair<double, std::int64_t>> acc;
  std::int64_t censored = 0;
  for (const TtfRecord& r : records) {
    if (r.failure_reason == FailureReason::censored) {
      ++censored;
      continue;
    }
    auto& [sum, count] = acc[r.n_atoms];
    sum += static_cast<double>(r.steps_survived);
    ++count;
  }
  if (censored_count) *censored_count = censored;
  std::vector<FitPoint> out;
  for (const auto& [n, sc] : acc) {
    out.push_back({static_cast<double>(n), sc.first / static_cast<double>(sc.second)});
  }
  return out;
}

FitResult fit_power_law(std::span<const TtfRecord> records) {
  std::int64_t censored = 0;
  const auto points = mean_survival(records, &censored);
  FitResult fit = fit_power_law(std::span<const FitPoint>(points));
  fit.censored_count = censored;
  return fit;
}

FitResult fit_power_law(std::span<const TtfCsvRow> rows) {
  std::map<std::int64_t, std::pair<double, std::int64_t>> acc;
  std::int64_t censored = 0;
  for (const TtfCsvRow& r : rows) {
    if (r.failure_reason == FailureReason::censored) {
      ++censored;
      continue;
    }
    auto& [sum, count] = acc[r.n_atoms];
    sum += r.steps_survived;
    ++count;
  }
  std::vector<FitPoint> points;
  for (const auto& [n, sc] : acc) {
    points.push_back({static_cast<double>(n), sc.first / static_cast<double>(sc.second)});
  }
  FitResult fit = fit_power_law(std::span<const FitPoint>(points));
  fit.censored_count = censored;
  return fit;
}

OutlierTrend outlier_trend(const TtfRecord& record) {
  OutlierTrend trend;
  const auto& series = record.outlier_series;
  if (series.empty()) return trend;
  const double life = static_cast<double>(std::max<std::int64_t>(record.steps_survived, 1));
  auto window_mean = [&](auto in_window, bool from_end) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const OutlierSample& s : series) {
      if (in_window(static_cast<double>(s.step))) {
        sum += static_cast<double>(s.count);
        ++n;
      }
    }
    if (n == 0) return static_cast<double>(from_end ? series.back().count : series.front().count);
    return sum / static_cast<double>(n);
  };
  trend.early = window_mean([&](double t) { return t <= 0.1 * life; }, false);
  trend.late = window_mean([&](double t) { return t >= 0.9 * life; }, true);
  return trend;
}

SweepResult rho_sweep(const Dataset& data, const DescriptorConfig& descriptors,
                      const std::vector<std::size_t>& hidden, TrainConfig train_config,
                      std::span<const double> rho_grid, const TtfProtocol& protocol,
                      std::uint64_t train_seed, int workers) {
  if (rho_grid.empty()) throw std::invalid_argument("rho grid must not be empty");
  protocol.validate();
  const ForceBaseline baseline =
      compute_force_baseline(std::span<const TrainExample>(data.train), protocol.baseline_measure);
  SweepResult result;
  double best = -1.0;
  for (double rho : rho_grid) {
    SweepRow row;
    row.rho = rho;
    try {
      if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
      TrainConfig cfg = train_config;
      cfg.optimizer = rho > 0.0 ? OptimizerKind::sam : OptimizerKind::adam;
      cfg.rho = rho;
      auto trained = train_force_field(data, descriptors, hidden, cfg, train_seed);
      auto model = std::make_shared<NeuralForceField>(std::move(trained.model));
      const std::int64_t sizes[] = {protocol.n_atoms};
      const auto records = run_ttf_series(model, protocol, sizes, baseline, workers);
      double sum = 0.0;
      for (const TtfRecord& r : records) {
        sum += static_cast<double>(r.steps_survived);
        if (r.failure_reason == FailureReason::censored) {
          ++row.censored;
        } else {
          ++row.failed;
        }
      }
      row.mean_steps = sum / static_cast<double>(records.size());
      if (row.mean_steps > best) {
        best = row.mean_steps;
        result.best_rho = rho;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
      row.mean_steps = std::numeric_limits<double>::quiet_NaN();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_ttf_csv(std::ostream& out, std::span<const TtfRecord> records,
                   const std::string& model_id, double rho, bool header) {
  if (header) out << "model_id,rho,n_atoms,seed,steps_survived,failure_reason\n";
  for (const TtfRecord& r : records) {
    out << model_id << ',' << detail::format_double(rho) << ',' << r.n_atoms << ','
        << r.seed << ',' << r.steps_survived << ',' << to_string(r.failure_reason) << '\n';
  }
}

std::vector<TtfCsvRow> read_ttf_csv(std::istream& in) {
  std::vector<TtfCsvRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("model_id", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      throw std::runtime_error("ttf csv line " + std::to_string(line_no) +
                               ": expected 6 columns");
    }
    try {
      TtfCsvRow row;
      row.model_id = cells[0];
      row.rho = std::stod(cells[1]);
      row.n_atoms = std::stoll(cells[2]);
      row.seed = std::stoull(cells[3]);
      row.steps_survived = std::stod(cells[4]);
      row.failure_reason = failure_from_string(cells[5]);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw std::runtime_error("ttf csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_outlier_jsonl(std::ostream& out, std::span<const TtfRecord> records,
                         const std::string& model_id) {
  for (const TtfRecord& r : records) {
    detail::Json series = detail::Json::array();
    for (const OutlierSample& s : r.outlier_series) series.push_back({s.step, s.count});
    detail::Json line = {{"model_id", model_id},
                         {"n_atoms", r.n_atoms},
                         {"seed", r.seed},
                         {"failure_reason", to_string(r.failure_reason)},
                         {"series", std::move(series)}};
    out << line.dump() << '\n';
  }
}

}  // namespace flatff
