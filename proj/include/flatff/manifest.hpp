#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flatff {

std::string code_version();

struct ManifestOutput {
  std::string path;  // relative to the run directory
  std::uintmax_t bytes = 0;
};

/// Everything needed to repeat a command: its arguments, the resolved config
/// and the seeds it drew, plus what it wrote and how long it took.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json;
  std::uint64_t root_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<ManifestOutput> outputs;
  std::string started_utc;
  double wall_seconds = 0.0;
  std::string status = "ok";
  std::string error;
};

/// Writes manifest.json beside the outputs via a temporary file and a rename.
void write_manifest_atomic(const std::filesystem::path& run_dir, const RunManifest& manifest);

/// Lists regular files under run_dir (manifest excluded), sorted by path.
std::vector<ManifestOutput> inventory(const std::filesystem::path& run_dir);

/// UTC "YYYYMMDD-HHMMSS".
std::string utc_stamp();

}  // namespace flatff
