#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flatff/oracle.hpp"
#include "flatff/potential.hpp"
#include "flatff/trainer.hpp"

namespace flatff {

/// Where the outlier baseline comes from and what is measured per atom.
enum class BaselineSource { training_set, thermalization };
enum class BaselineMeasure { force_norm, max_component };

/// Time-to-failure protocol: lattice start melted with the reference potential
/// for premelt_steps, NVT thermalisation with the model, then NVE until the run
/// fails or the step budget is exhausted. max_steps includes the model's NVT
/// phase (not the premelt); steps_survived counts NVE steps only, so a
/// censored run reports max_steps - nvt_steps.
struct TtfProtocol {
  std::int64_t n_atoms = 64;
  double temperature = 0.7;
  double dt = 0.002;
  double density = 0.8;
  double skin = 0.3;
  double thermostat_tau_steps = 100.0;
  std::int64_t premelt_steps = 2000;
  LjParams premelt_potential = LjParams::truncated_shifted();
  std::int64_t nvt_steps = 1000;
  std::int64_t max_steps = 1'000'000;
  double energy_drift_tol = 0.1;
  std::int64_t check_interval = 100;
  double displacement_safety = 1.0;
  double overlap_distance = 0.75;  // 0 disables the overlap check
  double outlier_sigma = 5.0;
  std::int64_t outlier_interval = 50;
  BaselineSource baseline_source = BaselineSource::training_set;
  BaselineMeasure baseline_measure = BaselineMeasure::force_norm;
  std::vector<std::uint64_t> seeds{1};

  void validate() const;
};

enum class FailureReason {
  non_finite,
  displacement_blowup,
  atom_overlap,
  energy_drift,
  censored
};

std::string to_string(FailureReason reason);
FailureReason failure_from_string(const std::string& name);

struct OutlierSample {
  std::int64_t step = 0;
  std::int64_t count = 0;
};

struct TtfRecord {
  std::int64_t n_atoms = 0;
  std::uint64_t seed = 0;
  std::int64_t steps_survived = 0;
  FailureReason failure_reason = FailureReason::censored;
  std::vector<OutlierSample> outlier_series;
};

/// Mean and standard deviation of the per-atom force measure.
struct ForceBaseline {
  double mean_force_norm = 0.0;
  double sigma_force_norm = 0.0;
  std::string source;
  BaselineMeasure measure = BaselineMeasure::force_norm;
};

/// std::invalid_argument when the spread is zero (no usable threshold).
ForceBaseline compute_force_baseline(std::span<const std::vector<Vec3>> force_sets,
                                     std::string source,
                                     BaselineMeasure measure = BaselineMeasure::force_norm);
ForceBaseline compute_force_baseline(std::span<const TrainExample> dataset,
                                     BaselineMeasure measure = BaselineMeasure::force_norm);

/// Atoms whose force measure strictly exceeds mean + k * sigma.
std::int64_t count_outliers(std::span<const Vec3> forces, const ForceBaseline& baseline,
                            double k);

/// What the failure detector sees after one NVE step.
struct StepObservation {
  const SystemState& state;
  const ForceResult& forces;
  std::span<const Vec3> previous_unwrapped;  // positions before this step
  std::int64_t nve_step = 0;
  double min_pair_distance = std::numeric_limits<double>::infinity();
};

/// non_finite, then displacement_blowup (one-step move beyond
/// skin/2 * displacement_safety), then atom_overlap (a pair closer than
/// overlap_distance), then energy_drift (relative drift of kinetic + potential
/// energy beyond tolerance, on check steps only).
std::optional<FailureReason> detect_failure(const StepObservation& obs,
                                            double initial_nve_energy,
                                            const TtfProtocol& protocol);

/// One run. `baseline` is used unless the protocol asks for a thermalisation
/// baseline, which is then measured from this run's NVT phase.
TtfRecord run_ttf(std::shared_ptr<const Potential> model, const TtfProtocol& protocol,
                  const ForceBaseline& baseline, std::uint64_t seed);

/// Every (size, seed) combination, `workers` runs at a time. Records come back
/// in the order of `sizes`, then seed, regardless of scheduling.
std::vector<TtfRecord> run_ttf_series(std::shared_ptr<const Potential> model,
                                      const TtfProtocol& protocol,
                                      std::span<const std::int64_t> sizes,
                                      const ForceBaseline& baseline, int workers = 1);

struct FitPoint {
  double n_atoms = 0.0;
  double mean_steps = 0.0;
};

/// Least squares of ln t on ln N; t = alpha * N^(-beta).
struct FitResult {
  double alpha = 0.0;
  double beta = 0.0;
  double beta_stderr = 0.0;  // NaN with only two points
  std::int64_t n_points = 0;
  double r_squared = 0.0;
  std::int64_t censored_count = 0;
};

/// FitError with fewer than two distinct sizes having a positive mean.
FitResult fit_power_law(std::span<const FitPoint> points);

/// Per-size mean of uncensored records, then fit_power_law(points).
FitResult fit_power_law(std::span<const TtfRecord> records);

/// Uncensored per-size means (sizes ascending).
std::vector<FitPoint> mean_survival(std::span<const TtfRecord> records,
                                    std::int64_t* censored_count = nullptr);

/// Mean outlier count over the first and last tenth of a run's NVE life.
struct OutlierTrend {
  double early = 0.0;
  double late = 0.0;
};
OutlierTrend outlier_trend(const TtfRecord& record);

struct SweepRow {
  double rho = 0.0;
  double mean_steps = 0.0;  // uncensored runs count at their censoring time
  std::int64_t failed = 0;
  std::int64_t censored = 0;
  std::string error;        // non-empty if the cell could not be completed
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double best_rho = 0.0;
};

/// Trains one model per rho on identical data and seed (rho = 0 is plain Adam)
/// and runs the protocol at protocol.n_atoms for every protocol seed.
SweepResult rho_sweep(const Dataset& data, const DescriptorConfig& descriptors,
                      const std::vector<std::size_t>& hidden, TrainConfig train_config,
                      std::span<const double> rho_grid, const TtfProtocol& protocol,
                      std::uint64_t train_seed, int workers = 1);

inline std::vector<double> default_rho_grid() {
  return {0.0, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05};
}

/// CSV: model_id,rho,n_atoms,seed,steps_survived,failure_reason
void write_ttf_csv(std::ostream& out, std::span<const TtfRecord> records,
                   const std::string& model_id, double rho, bool header = true);

/// Reads the CSV above (steps may be fractional) into per-size means.
struct TtfCsvRow {
  std::string model_id;
  double rho = 0.0;
  std::int64_t n_atoms = 0;
  std::uint64_t seed = 0;
  double steps_survived = 0.0;
  FailureReason failure_reason = FailureReason::censored;
};
std::vector<TtfCsvRow> read_ttf_csv(std::istream& in);
FitResult fit_power_law(std::span<const TtfCsvRow> rows);

/// One JSON object per line: {model_id, n_atoms, seed, series: [[step, count], ...]}
void write_outlier_jsonl(std::ostream& out, std::span<const TtfRecord> records,
                         const std::string& model_id);

}  // namespace flatff
