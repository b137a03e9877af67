#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flatff/descriptor.hpp"
#include "flatff/fidelity.hpp"
#include "flatff/oracle.hpp"
#include "flatff/system.hpp"
#include "flatff/trainer.hpp"

namespace flatff {

struct SystemSection {
  std::int64_t n_atoms = 64;
  SimConfig sim;
};

struct DatasetSection {
  std::int64_t n_train = 2000;
  std::int64_t n_val = 200;
  std::int64_t sample_interval = 50;
  std::int64_t burn_in_steps = 5000;
};

struct ModelSection {
  double r_max = 2.5;
  std::size_t n_basis = 8;
  double first_center = 0.8;
  std::vector<std::size_t> hidden{16, 16};
};

struct ProbeSection {
  double rho = 0.05;
  std::int64_t samples = 1000;
  std::size_t scan_points = 41;
  double scan_scale = 0.05;
  std::string split = "validation";  // or "training"
};

struct TtfSection {
  std::vector<std::int64_t> sizes{64, 128, 256, 512, 1024};
  std::int64_t n_seeds = 10;
  double temperature = 0.7;  // thermalisation target; training data use system.temperature
  double thermostat_tau_steps = 100.0;
  std::int64_t premelt_steps = 2000;  // reference-potential melt before the model's NVT
  std::int64_t nvt_steps = 1000;
  std::int64_t max_steps = 1'000'000;
  double energy_drift_tol = 0.1;
  std::int64_t check_interval = 100;
  double displacement_safety = 1.0;
  double overlap_distance = 0.75;
  double outlier_sigma = 5.0;
  std::int64_t outlier_interval = 50;
  BaselineSource baseline_source = BaselineSource::training_set;
  BaselineMeasure baseline_measure = BaselineMeasure::force_norm;
  int workers = 1;
};

struct SweepSection {
  std::vector<double> rho_grid = default_rho_grid();
};

struct ParallelSection {
  std::vector<int> workers_list{1, 2, 4, 8};
  std::int64_t atoms_per_domain = 1000;
  std::int64_t steps = 20;
};

struct PathsSection {
  std::string runs_dir = "runs";
  std::string dataset;
  std::string model;
};

/// Every knob of an experiment. Sub-streams of `seed`: "data" (dataset),
/// "init" and "shuffle" (training), "probe" and "scan" (landscape probes),
/// "ttf-seeds" (per-run seeds of the failure protocol).
struct ExperimentConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  SystemSection system;
  LjParams oracle = LjParams::truncated_shifted();
  DatasetSection dataset;
  ModelSection model;
  TrainConfig train;
  ProbeSection probe;
  TtfSection ttf;
  SweepSection sweep;
  ParallelSection parallel;
  PathsSection paths;

  DatasetSpec dataset_spec() const;
  DescriptorConfig descriptor_config() const;
  /// Protocol at the first configured size with the derived run seeds.
  TtfProtocol ttf_protocol() const;
  std::vector<std::uint64_t> ttf_seeds(std::int64_t count) const;
};

/// desk (scaled-down defaults), paper-analog (432 atoms, 4500/500 examples)
/// and fragile (desk with 500 training examples and the failure protocol run
/// hot, at T = 1.2, so that failures occur within desk-scale budgets).
std::vector<std::string> preset_names();
/// ConfigError for an unknown name.
ExperimentConfig preset(const std::string& name);

std::string config_to_json(const ExperimentConfig& config, int indent = 2);

/// Strict: every key must be known. Errors name the key path, e.g.
/// "train.lrr: unknown key". `origin` prefixes messages (usually a file path).
ExperimentConfig config_from_json(const std::string& text, const std::string& origin);

/// Preset, then the file (which may name its own "preset"), then each
/// "dotted.key=value" override in order. Values parse as JSON, falling back to
/// a plain string.
ExperimentConfig load_config(const std::string& preset_name,
                             const std::filesystem::path& file,
                             const std::vector<std::string>& overrides);

}  // namespace flatff
