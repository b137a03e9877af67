#include "flatff/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "json_util.hpp"

#ifndef FLATFF_VERSION
#define FLATFF_VERSION "0.0.0"
#endif
#ifndef FLATFF_GIT_REVISION
#define FLATFF_GIT_REVISION "unknown"
#endif

namespace flatff {

std::string code_version() {
  return std::string(FLATFF_VERSION) + "+" + FLATFF_GIT_REVISION;
}

std::vector<ManifestOutput> inventory(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::vector<ManifestOutput> out;
  if (!fs::exists(run_dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel == "manifest.json" || rel.rfind("manifest.json.", 0) == 0) continue;
    out.push_back({rel, entry.file_size()});
  }
  std::sort(out.begin(), out.end(),
            [](const ManifestOutput& a, const ManifestOutput& b) { return a.path < b.path; });
  return out;
}

void write_manifest_atomic(const std::filesystem::path& run_dir, const RunManifest& m) {
  using detail::Json;
  Json outputs = Json::array();
  for (const ManifestOutput& o : m.outputs) outputs.push_back({{"path", o.path}, {"bytes", o.bytes}});
  Json config = m.config_json.empty() ? Json(nullptr) : Json::parse(m.config_json);
  const Json j = {{"command", m.command},
                  {"argv", m.argv},
                  {"code_version", code_version()},
                  {"config", std::move(config)},
                  {"root_seed", m.root_seed},
                  {"seeds", m.seeds},
                  {"outputs", std::move(outputs)},
                  {"started_utc", m.started_utc},
                  {"wall_seconds", m.wall_seconds},
                  {"status", m.status},
                  {"error", m.error}};
  std::filesystem::create_directories(run_dir);
  const auto final_path = run_dir / "manifest.json";
  const auto tmp_path = run_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) throw std::runtime_error("cannot write " + tmp_path.string());
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp_path.string());
  }
  std::filesystem::rename(tmp_path, final_path);
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

}  // namespace flatff
