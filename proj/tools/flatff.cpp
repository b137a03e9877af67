#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flatff/config.hpp"
#include "flatff/errors.hpp"
#include "flatff/manifest.hpp"
#include "flatff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace flatff;

namespace {

struct GlobalOptions {
  std::string preset = "desk";
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

fs::path make_run_dir(const ExperimentConfig& cfg, const std::string& command,
                      const std::string& out) {
  if (!out.empty()) {
    fs::create_directories(out);
    return out;
  }
  const fs::path base = fs::path(cfg.paths.runs_dir) / (utc_stamp() + "-" + command);
  fs::path dir = base;
  for (int k = 2; fs::exists(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  fs::create_directories(dir);
  return dir;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const GeometryError*>(&e)) return "GeometryError";
  if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
  if (dynamic_cast<const FitError*>(&e)) return "FitError";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
  return "Error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flatff: neural force fields, sharpness-aware training and MD time-to-failure"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--preset", g.preset, "Base preset: desk, paper-analog or fragile")
      ->capture_default_str();
  app.add_option("--config", g.config_file, "JSON config layered over the preset")
      ->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config value, e.g. --set train.lr=1e-3")
      ->take_all();
  app.add_option("--out", g.out, "Output directory (default runs/<timestamp>-<command>)");
  app.add_option("--seed", g.seed, "Root seed");
  app.add_option("--workers", g.workers, "Concurrent TTF runs");

  std::string data, model, model_id, csv, optimizer, ensemble = "nve", sizes_text, workers_text;
  std::optional<double> rho;
  std::optional<std::int64_t> steps, every, seeds, samples, max_epochs, max_steps;
  std::vector<std::int64_t> sizes;
  std::vector<int> workers_list;

  auto* gen = app.add_subcommand("gen-data", "Generate an oracle-labelled dataset");

  auto* train = app.add_subcommand("train", "Train a force field");
  train->add_option("--data", data, "Dataset (.jsonl)");
  train->add_option("--optimizer", optimizer, "adam or sam")
      ->check(CLI::IsMember({"adam", "sam"}));
  train->add_option("--rho", rho, "SAM radius");
  train->add_option("--max-epochs", max_epochs, "Epoch cap");

  auto* sim = app.add_subcommand("simulate", "Run MD with a model or the oracle");
  sim->add_option("--model", model, "Checkpoint path or 'oracle'")->required();
  sim->add_option("--ensemble", ensemble, "nve or nvt")->check(CLI::IsMember({"nve", "nvt"}));
  sim->add_option("--steps", steps, "Number of steps")->required();
  sim->add_option("--every", every, "Trajectory frame interval (default 100)");

  auto* ttf = app.add_subcommand("ttf", "Time-to-failure runs");
  ttf->add_option("--model", model, "Checkpoint path or 'oracle'")->required();
  ttf->add_option("--data", data, "Dataset for the force-outlier baseline");
  ttf->add_option("--sizes", sizes, "System sizes (atoms)");
  ttf->add_option("--seeds", seeds, "Runs per size");
  ttf->add_option("--max-steps", max_steps, "Step cap including NVT thermalisation");

  auto* sweep = app.add_subcommand("rho-sweep", "Train one model per rho and compare TTF");
  sweep->add_option("--data", data, "Dataset (.jsonl)");
  sweep->add_option("--seeds", seeds, "Runs per rho");
  sweep->add_option("--max-steps", max_steps, "Step cap including NVT thermalisation");

  auto* sharp = app.add_subcommand("sharpness", "Sampled sharpness of a trained model");
  sharp->add_option("--model", model, "Checkpoint path")->required();
  sharp->add_option("--data", data, "Dataset (.jsonl)");
  sharp->add_option("--rho", rho, "Probe radius");
  sharp->add_option("--samples", samples, "Number of random directions");

  auto* scan = app.add_subcommand("loss-scan", "1-D loss profile along a random direction");
  scan->add_option("--model", model, "Checkpoint path")->required();
  scan->add_option("--data", data, "Dataset (.jsonl)");

  auto* fit = app.add_subcommand("fit", "Power-law fit of a TTF table");
  fit->add_option("csv", csv, "ttf.csv")->required();
  fit->add_option("--model-id", model_id, "Restrict to one model");

  auto* bench = app.add_subcommand("bench-parallel", "Weak-scaling benchmark of domain workers");
  bench->add_option("--model", model, "Checkpoint path or 'oracle' (default)");
  bench->add_option("--workers-list", workers_list, "Worker counts");
  bench->add_option("--steps", steps, "Timed steps per worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  const auto started = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = name;
  manifest.argv.assign(argv, argv + argc);
  manifest.started_utc = utc_stamp();
  std::optional<fs::path> run_dir;

  try {
    ExperimentConfig cfg = load_config(g.preset, g.config_file, g.sets);
    if (g.seed) cfg.seed = *g.seed;
    if (g.workers) cfg.ttf.workers = *g.workers;
    if (!optimizer.empty()) cfg.train.optimizer = optimizer_from_string(optimizer);
    if (rho && name == "train") cfg.train.rho = *rho;
    if (rho && name == "sharpness") cfg.probe.rho = *rho;
    if (max_epochs) cfg.train.max_epochs = *max_epochs;
    if (!sizes.empty()) cfg.ttf.sizes = sizes;
    if (seeds) cfg.ttf.n_seeds = *seeds;
    if (max_steps) cfg.ttf.max_steps = *max_steps;
    if (samples) cfg.probe.samples = *samples;
    if (!workers_list.empty()) cfg.parallel.workers_list = workers_list;
    if (steps && name == "bench-parallel") cfg.parallel.steps = *steps;
    if (data.empty()) data = cfg.paths.dataset;
    if (model.empty()) model = cfg.paths.model;
    // Re-validate after flag overrides.
    cfg = config_from_json(config_to_json(cfg), "command-line flags");
    manifest.config_json = config_to_json(cfg);
    manifest.root_seed = cfg.seed;

    run_dir = make_run_dir(cfg, name, g.out);
    CommandResult result;
    if (cmd == gen) {
      result = cmd_gen_data(cfg, *run_dir);
    } else if (cmd == train) {
      result = cmd_train(cfg, data, *run_dir);
    } else if (cmd == sim) {
      result = cmd_simulate(cfg, model, ensemble == "nvt" ? Ensemble::nvt : Ensemble::nve,
                            *steps, every.value_or(100), *run_dir);
    } else if (cmd == ttf) {
      result = cmd_ttf(cfg, model, data, *run_dir);
    } else if (cmd == sweep) {
      result = cmd_rho_sweep(cfg, data, *run_dir);
    } else if (cmd == sharp) {
      result = cmd_sharpness(cfg, model, data, *run_dir);
    } else if (cmd == scan) {
      result = cmd_loss_scan(cfg, model, data, *run_dir);
    } else if (cmd == fit) {
      result = cmd_fit(csv, model_id, *run_dir);
    } else if (cmd == bench) {
      result = cmd_bench_parallel(cfg, model, *run_dir);
    }
    manifest.seeds = result.seeds;
    manifest.outputs = inventory(*run_dir);
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest_atomic(*run_dir, manifest);
    std::cout << result.summary << '\n' << "output: " << run_dir->string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    const nlohmann::json line = {
        {"command", name}, {"error", error_type(e)}, {"message", e.what()}};
    std::cerr << "error: " << line.dump() << '\n';
    if (run_dir) {
      try {
        manifest.status = "error";
        manifest.error = e.what();
        manifest.outputs = inventory(*run_dir);
        manifest.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_manifest_atomic(*run_dir, manifest);
      } catch (...) {
      }
    }
    return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
  }
}
