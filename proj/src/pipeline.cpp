#include "flatff/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "flatff/checkpoint.hpp"
#include "flatff/dataset_io.hpp"
#include "flatff/errors.hpp"
#include "flatff/fidelity.hpp"
#include "flatff/integrate.hpp"
#include "flatff/loss.hpp"
#include "flatff/pardomain.hpp"
#include "flatff/probes.hpp"
#include "flatff/xyz.hpp"
#include "json_util.hpp"

namespace flatff {

using detail::format_double;
using detail::Json;
using detail::number_or_null;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const Json& j) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

Dataset require_dataset(const fs::path& data) {
  if (data.empty()) throw ConfigError("a dataset is required (--data or paths.dataset)");
  if (!fs::exists(data)) throw ConfigError(data.string() + ": dataset not found");
  return load_dataset(data);
}

std::string model_id_of(const std::string& model) {
  if (model == "oracle") return "oracle";
  const fs::path p(model);
  const std::string parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent + "/" + p.stem().string();
}

LossFn probe_loss_fn(const NeuralForceField& model, const Dataset& data,
                     const ExperimentConfig& config) {
  auto loss = std::make_shared<ForceFieldLoss>(model, config.train.coefficients);
  const auto& split = config.probe.split == "training" ? data.train : data.val;
  if (split.empty()) throw ConfigError("probe." + config.probe.split + ": split is empty");
  auto prepared = std::make_shared<std::vector<PreparedExample>>(
      loss->prepare(std::span<const TrainExample>(split)));
  return [loss, prepared](std::span<const double> w) {
    return loss->loss(std::span<const PreparedExample>(*prepared), w).total;
  };
}

Checkpoint require_checkpoint(const std::string& model) {
  if (model.empty() || model == "oracle") {
    throw ConfigError("this command needs a trained checkpoint (--model)");
  }
  if (!fs::exists(model)) throw ConfigError(model + ": checkpoint not found");
  return load_checkpoint(model);
}

}  // namespace

std::shared_ptr<const Potential> load_potential(const ExperimentConfig& config,
                                                const std::string& model) {
  if (model.empty()) throw ConfigError("no model given (--model PATH or --model oracle)");
  if (model == "oracle") return std::make_shared<LennardJones>(config.oracle);
  if (!fs::exists(model)) throw ConfigError(model + ": checkpoint not found");
  return std::make_shared<NeuralForceField>(load_checkpoint(model).model);
}

CommandResult cmd_gen_data(const ExperimentConfig& config, const fs::path& out) {
  const Dataset data = generate_dataset(config.dataset_spec(), config.system.sim, config.oracle);
  save_dataset(out / "dataset.jsonl", data);
  std::ostringstream s;
  s << "dataset: " << data.train.size() << " train + " << data.val.size()
    << " val examples of " << config.system.n_atoms << " atoms";
  return {{config.seed}, s.str()};
}

CommandResult cmd_train(const ExperimentConfig& config, const fs::path& data_path,
                        const fs::path& out) {
  const Dataset data = require_dataset(data_path);
  TrainConfig tc = config.train;
  auto trained = train_force_field(data, config.descriptor_config(), config.model.hidden, tc,
                                   config.seed);
  TrainingMetadata meta;
  meta.optimizer = to_string(tc.optimizer);
  meta.rho = tc.optimizer == OptimizerKind::sam ? tc.rho : 0.0;
  meta.epochs = trained.report.epochs_run;
  if (!trained.report.epochs.empty()) {
    meta.final_train_loss = trained.report.epochs.back().train_loss;
    meta.final_val_loss = trained.report.epochs.back().val_loss;
  }
  meta.best_val_loss = trained.report.best_val_loss;
  meta.stop_reason = to_string(trained.report.stop_reason);
  meta.seed = config.seed;
  save_checkpoint(out / "model.json", trained.model, meta);
  {
    auto log = detail::open_output(out / "train_log.csv");
    write_training_log(log, trained.report);
  }
  std::ostringstream s;
  s << "trained " << meta.optimizer << " (rho " << meta.rho << ") for " << meta.epochs
    << " epochs, best val loss " << meta.best_val_loss << ", stop: " << meta.stop_reason;
  return {{config.seed}, s.str()};
}

CommandResult cmd_simulate(const ExperimentConfig& config, const std::string& model,
                           Ensemble ensemble, std::int64_t steps, std::int64_t every,
                           const fs::path& out) {
  if (steps < 0) throw ConfigError("--steps must be >= 0");
  if (every < 1) throw ConfigError("--every must be >= 1");
  auto potential = load_potential(config, model);
  const SimConfig& sim = config.system.sim;
  SystemState state =
      lattice_state(static_cast<std::size_t>(config.system.n_atoms), sim.density);
  Rng rng = make_stream(config.seed, "simulate");
  assign_velocities(state, sim.temperature, rng);
  NeighborListForces provider(potential, sim.skin);
  Frame frame = make_frame(std::move(state), provider);
  Thermostat thermostat =
      make_thermostat(frame.state.size(), sim.temperature, sim.dt, sim.thermostat_tau_steps);

  auto traj = detail::open_output(out / "trajectory.xyz");
  auto thermo = detail::open_output(out / "thermo.csv");
  thermo << "step,temperature,potential,kinetic,total\n";
  auto record = [&](std::int64_t step) {
    const double k = kinetic_energy(frame.state);
    thermo << step << ',' << format_double(instantaneous_temperature(frame.state)) << ','
           << format_double(frame.forces.energy) << ',' << format_double(k) << ','
           << format_double(k + frame.forces.energy) << '\n';
    write_xyz_frame(traj, frame.state, frame.forces.energy);
  };
  record(0);
  std::int64_t done = 0;
  std::string note;
  try {
    for (std::int64_t step = 1; step <= steps; ++step) {
      if (ensemble == Ensemble::nvt) {
        step_nvt(frame, provider, sim.dt, thermostat);
      } else {
        step_nve(frame, provider, sim.dt);
      }
      done = step;
      if (step % every == 0) record(step);
    }
  } catch (const NumericalError& e) {
    note = std::string(", stopped: ") + e.what();
  }
  std::ostringstream s;
  s << "simulated " << done << " " << (ensemble == Ensemble::nvt ? "NVT" : "NVE")
    << " steps of " << frame.state.size() << " atoms" << note;
  if (!note.empty()) throw NumericalError(s.str());
  return {{config.seed}, s.str()};
}

CommandResult cmd_ttf(const ExperimentConfig& config, const std::string& model,
                      const fs::path& data, const fs::path& out) {
  auto potential = load_potential(config, model);
  TtfProtocol protocol = config.ttf_protocol();
  ForceBaseline baseline;
  if (protocol.baseline_source == BaselineSource::training_set) {
    const Dataset d = require_dataset(data);
    baseline = compute_force_baseline(std::span<const TrainExample>(d.train),
                                      protocol.baseline_measure);
  } else {
    baseline.source = "thermalization";
    baseline.measure = protocol.baseline_measure;
  }
  double rho = 0.0;
  if (model != "oracle") rho = load_checkpoint(model).metadata.rho;

  const auto records =
      run_ttf_series(potential, protocol, config.ttf.sizes, baseline, config.ttf.workers);
  const std::string id = model_id_of(model);
  {
    auto csv = detail::open_output(out / "ttf.csv");
    write_ttf_csv(csv, records, id, rho);
  }
  {
    auto jsonl = detail::open_output(out / "outliers.jsonl");
    write_outlier_jsonl(jsonl, records, id);
  }
  write_json(out / "baseline.json",
             Json{{"source", baseline.source},
                  {"measure", baseline.measure == BaselineMeasure::force_norm ? "force_norm"
                                                                               : "max_component"},
                  {"mean", baseline.mean_force_norm},
                  {"sigma", baseline.sigma_force_norm}});
  std::int64_t censored = 0;
  for (const TtfRecord& r : records) censored += r.failure_reason == FailureReason::censored;
  std::ostringstream s;
  s << records.size() << " runs, " << censored << " censored";
  const auto means = mean_survival(records);
  for (const FitPoint& p : means) s << "; N=" << p.n_atoms << " mean " << p.mean_steps;
  return {protocol.seeds, s.str()};
}

CommandResult cmd_rho_sweep(const ExperimentConfig& config, const fs::path& data_path,
                            const fs::path& out) {
  const Dataset data = require_dataset(data_path);
  const TtfProtocol protocol = config.ttf_protocol();
  const SweepResult sweep =
      rho_sweep(data, config.descriptor_config(), config.model.hidden, config.train,
                config.sweep.rho_grid, protocol, config.seed, config.ttf.workers);
  {
    auto csv = detail::open_output(out / "rho_sweep.csv");
    csv << "rho,mean_steps,failed,censored,error\n";
    for (const SweepRow& r : sweep.rows) {
      std::string err = r.error;
      for (char& c : err) {
        if (c == ',' || c == '\n') c = ' ';
      }
      csv << format_double(r.rho) << ','
          << (std::isfinite(r.mean_steps) ? format_double(r.mean_steps) : "nan") << ','
          << r.failed << ',' << r.censored << ',' << err << '\n';
    }
  }
  write_json(out / "rho_sweep.json",
             Json{{"best_rho", sweep.best_rho}, {"n_atoms", protocol.n_atoms}});
  std::ostringstream s;
  s << "swept " << sweep.rows.size() << " rho values at N=" << protocol.n_atoms
    << ", best rho " << sweep.best_rho;
  return {protocol.seeds, s.str()};
}

CommandResult cmd_sharpness(const ExperimentConfig& config, const std::string& model,
                            const fs::path& data_path, const fs::path& out) {
  const Checkpoint ck = require_checkpoint(model);
  const Dataset data = require_dataset(data_path);
  const LossFn fn = probe_loss_fn(ck.model, data, config);
  const SharpnessEstimate est =
      measure_sharpness(fn, ck.model.params(), config.probe.rho, config.probe.samples, config.seed);
  const double base = fn(ck.model.params());
  write_json(out / "sharpness.json", Json{{"model_id", model_id_of(model)},
                                          {"model_path", model},
                                          {"sharpness", est.value},
                                          {"sampling", "sphere"},
                                          {"rho", est.rho},
                                          {"n_samples", est.n_samples},
                                          {"seed", est.seed},
                                          {"loss", base},
                                          {"split", config.probe.split}});
  std::ostringstream s;
  s << "sharpness " << est.value << " at rho " << est.rho << " (" << est.n_samples
    << " samples, " << config.probe.split << " loss " << base << ")";
  return {{config.seed}, s.str()};
}

CommandResult cmd_loss_scan(const ExperimentConfig& config, const std::string& model,
                            const fs::path& data_path, const fs::path& out) {
  const Checkpoint ck = require_checkpoint(model);
  const Dataset data = require_dataset(data_path);
  const LossFn fn = probe_loss_fn(ck.model, data, config);
  const auto grid = uniform_grid(config.probe.scan_points);
  const LossScan scan =
      loss_scan(fn, ck.model.params(), grid, config.seed, config.probe.scan_scale);
  Json points = Json::array();
  for (std::size_t k = 0; k < scan.grid.size(); ++k) {
    points.push_back(Json::array({scan.grid[k], number_or_null(scan.values[k])}));
  }
  write_json(out / "loss_scan.json", Json{{"model_id", model_id_of(model)},
                                          {"model_path", model},
                                          {"rho", scan.scale},
                                          {"seed", config.seed},
                                          {"scan", std::move(points)},
                                          {"split", config.probe.split}});
  std::ostringstream s;
  s << "loss scan over " << scan.grid.size() << " points";
  return {{config.seed}, s.str()};
}

CommandResult cmd_fit(const fs::path& csv, const std::string& model_id, const fs::path& out) {
  if (!fs::exists(csv)) throw ConfigError(csv.string() + ": ttf csv not found");
  auto in = detail::open_input(csv);
  auto rows = read_ttf_csv(in);
  std::set<std::string> ids;
  for (const auto& r : rows) ids.insert(r.model_id);
  if (!model_id.empty()) {
    std::erase_if(rows, [&](const TtfCsvRow& r) { return r.model_id != model_id; });
  } else if (ids.size() > 1) {
    throw ConfigError(csv.string() + ": several models present, choose one with --model-id");
  }
  const FitResult fit = fit_power_law(std::span<const TtfCsvRow>(rows));
  write_json(out / "fit.json", Json{{"alpha", fit.alpha},
                                    {"beta", fit.beta},
                                    {"beta_stderr", number_or_null(fit.beta_stderr)},
                                    {"r_squared", fit.r_squared},
                                    {"censored_count", fit.censored_count},
                                    {"n_points", fit.n_points}});
  std::ostringstream s;
  s.precision(17);
  s << "beta " << fit.beta << " +- " << fit.beta_stderr << ", alpha " << fit.alpha << " ("
    << fit.n_points << " sizes, " << fit.censored_count << " censored)";
  return {{}, s.str()};
}

CommandResult cmd_bench_parallel(const ExperimentConfig& config, const std::string& model,
                                 const fs::path& out) {
  auto potential = load_potential(config, model.empty() ? "oracle" : model);
  const ScalingReport report = weak_scaling_bench(
      potential, static_cast<std::size_t>(config.parallel.atoms_per_domain),
      config.parallel.workers_list, config.parallel.steps, config.system.sim, config.seed);
  {
    auto csv = detail::open_output(out / "scaling.csv");
    write_scaling_csv(csv, report);
  }
  std::ostringstream s;
  s << "benchmarked " << report.rows.size() << " worker counts";
  for (const ScalingRow& r : report.rows) {
    s << "; P=" << r.workers << " eff " << r.efficiency;
  }
  return {{config.seed}, s.str()};
}

}  // namespace flatff
