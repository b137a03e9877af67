#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flatff/config.hpp"
#include "flatff/potential.hpp"

namespace flatff {

/// Seeds a command drew and a one-line summary for the terminal.
struct CommandResult {
  std::vector<std::uint64_t> seeds;
  std::string summary;
};

/// "oracle" selects the configured Lennard-Jones potential; anything else is a
/// checkpoint path.
std::shared_ptr<const Potential> load_potential(const ExperimentConfig& config,
                                                const std::string& model);

/// dataset.jsonl
CommandResult cmd_gen_data(const ExperimentConfig& config, const std::filesystem::path& out);

/// model.json, train_log.csv
CommandResult cmd_train(const ExperimentConfig& config, const std::filesystem::path& data,
                        const std::filesystem::path& out);

enum class Ensemble { nve, nvt };

/// trajectory.xyz (every `every` steps), thermo.csv
CommandResult cmd_simulate(const ExperimentConfig& config, const std::string& model,
                           Ensemble ensemble, std::int64_t steps, std::int64_t every,
                           const std::filesystem::path& out);

/// ttf.csv, outliers.jsonl, baseline.json. `data` supplies the training-set
/// force baseline and may be empty for a thermalisation baseline.
CommandResult cmd_ttf(const ExperimentConfig& config, const std::string& model,
                      const std::filesystem::path& data, const std::filesystem::path& out);

/// rho_sweep.csv (rho,mean_steps,failed,censored,error), rho_sweep.json
CommandResult cmd_rho_sweep(const ExperimentConfig& config, const std::filesystem::path& data,
                            const std::filesystem::path& out);

/// sharpness.json, on the split named by probe.split (validation by default).
CommandResult cmd_sharpness(const ExperimentConfig& config, const std::string& model,
                            const std::filesystem::path& data,
                            const std::filesystem::path& out);

/// loss_scan.json, points [p, L] on the same split as cmd_sharpness.
CommandResult cmd_loss_scan(const ExperimentConfig& config, const std::string& model,
                            const std::filesystem::path& data,
                            const std::filesystem::path& out);

/// fit.json from a ttf.csv; `model_id` selects rows when the file holds
/// several models.
CommandResult cmd_fit(const std::filesystem::path& csv, const std::string& model_id,
                      const std::filesystem::path& out);

/// scaling.csv
CommandResult cmd_bench_parallel(const ExperimentConfig& config, const std::string& model,
                                 const std::filesystem::path& out);

}  // namespace flatff
