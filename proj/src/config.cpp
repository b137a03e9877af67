#include "flatff/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "flatff/errors.hpp"
#include "flatff/rng.hpp"
#include "json_util.hpp"

namespace flatff {

using detail::Json;

namespace {

std::string to_string(BaselineSource s) {
  return s == BaselineSource::training_set ? "training_set" : "thermalization";
}

std::string to_string(BaselineMeasure m) {
  return m == BaselineMeasure::force_norm ? "force_norm" : "max_component";
}

Json config_json(const ExperimentConfig& c) {
  const SimConfig& s = c.system.sim;
  const TrainConfig& t = c.train;
  return Json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"system",
       {{"n_atoms", c.system.n_atoms},
        {"density", s.density},
        {"temperature", s.temperature},
        {"dt", s.dt},
        {"skin", s.skin},
        {"thermostat_tau_steps", s.thermostat_tau_steps}}},
      {"oracle",
       {{"epsilon", c.oracle.epsilon}, {"sigma", c.oracle.sigma}, {"cutoff", c.oracle.cutoff}}},
      {"dataset",
       {{"n_train", c.dataset.n_train},
        {"n_val", c.dataset.n_val},
        {"sample_interval", c.dataset.sample_interval},
        {"burn_in_steps", c.dataset.burn_in_steps}}},
      {"model",
       {{"r_max", c.model.r_max},
        {"n_basis", c.model.n_basis},
        {"first_center", c.model.first_center},
        {"hidden", c.model.hidden}}},
      {"train",
       {{"optimizer", to_string(t.optimizer)},
        {"rho", t.rho},
        {"lr", t.lr},
        {"batch_size", t.batch_size},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"patience", t.patience},
        {"factor", t.factor},
        {"min_delta", t.min_delta},
        {"stop_window", t.stop_window},
        {"stop_delta", t.stop_delta},
        {"max_epochs", t.max_epochs},
        {"energy_coefficient", t.coefficients.energy},
        {"force_coefficient", t.coefficients.force}}},
      {"probe",
       {{"rho", c.probe.rho},
        {"samples", c.probe.samples},
        {"scan_points", c.probe.scan_points},
        {"scan_scale", c.probe.scan_scale},
        {"split", c.probe.split}}},
      {"ttf",
       {{"sizes", c.ttf.sizes},
        {"n_seeds", c.ttf.n_seeds},
        {"temperature", c.ttf.temperature},
        {"thermostat_tau_steps", c.ttf.thermostat_tau_steps},
        {"premelt_steps", c.ttf.premelt_steps},
        {"nvt_steps", c.ttf.nvt_steps},
        {"max_steps", c.ttf.max_steps},
        {"energy_drift_tol", c.ttf.energy_drift_tol},
        {"check_interval", c.ttf.check_interval},
        {"displacement_safety", c.ttf.displacement_safety},
        {"overlap_distance", c.ttf.overlap_distance},
        {"outlier_sigma", c.ttf.outlier_sigma},
        {"outlier_interval", c.ttf.outlier_interval},
        {"baseline_source", to_string(c.ttf.baseline_source)},
        {"baseline_measure", to_string(c.ttf.baseline_measure)},
        {"workers", c.ttf.workers}}},
      {"sweep", {{"rho_grid", c.sweep.rho_grid}}},
      {"parallel",
       {{"workers_list", c.parallel.workers_list},
        {"atoms_per_domain", c.parallel.atoms_per_domain},
        {"steps", c.parallel.steps}}},
      {"paths",
       {{"runs_dir", c.paths.runs_dir},
        {"dataset", c.paths.dataset},
        {"model", c.paths.model}}}};
}

/// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const Json& j, std::string path, const std::string& origin)
      : j_(j), path_(std::move(path)), origin_(origin) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(join(key), "unknown key");
    }
  }

  template <class T>
  void get(const char* key, T& target) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw std::runtime_error("expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::runtime_error("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<std::int64_t>() < 0) {
            throw std::runtime_error("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::runtime_error("expected a string");
      }
      target = it->template get<T>();
    } catch (const std::exception& e) {
      fail(join(key), e.what());
    }
  }

  template <class T, class Parse>
  void get_enum(const char* key, T& target, Parse parse) {
    std::string name;
    get(key, name);
    if (j_.contains(key)) {
      try {
        target = parse(name);
      } catch (const std::exception& e) {
        fail(join(key), e.what());
      }
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const Json empty = Json::object();
    return Section(it == j_.end() ? empty : *it, join(key), origin_);
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    throw ConfigError(origin_ + ": " + where + ": " + what);
  }
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& j_;
  std::string path_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

BaselineSource source_from_string(const std::string& s) {
  if (s == "training_set") return BaselineSource::training_set;
  if (s == "thermalization") return BaselineSource::thermalization;
  throw std::invalid_argument("expected training_set or thermalization");
}

BaselineMeasure measure_from_string(const std::string& s) {
  if (s == "force_norm") return BaselineMeasure::force_norm;
  if (s == "max_component") return BaselineMeasure::max_component;
  throw std::invalid_argument("expected force_norm or max_component");
}

ExperimentConfig parse_config(const Json& j, const std::string& origin) {
  std::string preset_name = "desk";
  if (j.is_object() && j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError(origin + ": preset: expected a string");
    preset_name = j["preset"].get<std::string>();
  }
  ExperimentConfig c = preset(preset_name);
  {
    Section root(j, "", origin);
    root.get("preset", c.preset);
    root.get("seed", c.seed);
    {
      Section s = root.child("system");
      s.get("n_atoms", c.system.n_atoms);
      s.get("density", c.system.sim.density);
      s.get("temperature", c.system.sim.temperature);
      s.get("dt", c.system.sim.dt);
      s.get("skin", c.system.sim.skin);
      s.get("thermostat_tau_steps", c.system.sim.thermostat_tau_steps);
    }
    {
      Section s = root.child("oracle");
      double eps = c.oracle.epsilon, sigma = c.oracle.sigma, cutoff = c.oracle.cutoff;
      s.get("epsilon", eps);
      s.get("sigma", sigma);
      s.get("cutoff", cutoff);
      try {
        c.oracle = LjParams::truncated_shifted(eps, sigma, cutoff);
      } catch (const std::exception& e) {
        s.fail("oracle", e.what());
      }
    }
    {
      Section s = root.child("dataset");
      s.get("n_train", c.dataset.n_train);
      s.get("n_val", c.dataset.n_val);
      s.get("sample_interval", c.dataset.sample_interval);
      s.get("burn_in_steps", c.dataset.burn_in_steps);
    }
    {
      Section s = root.child("model");
      s.get("r_max", c.model.r_max);
      s.get("n_basis", c.model.n_basis);
      s.get("first_center", c.model.first_center);
      s.get("hidden", c.model.hidden);
    }
    {
      Section s = root.child("train");
      TrainConfig& t = c.train;
      s.get_enum("optimizer", t.optimizer, optimizer_from_string);
      s.get("rho", t.rho);
      s.get("lr", t.lr);
      s.get("batch_size", t.batch_size);
      s.get("beta1", t.beta1);
      s.get("beta2", t.beta2);
      s.get("eps", t.eps);
      s.get("patience", t.patience);
      s.get("factor", t.factor);
      s.get("min_delta", t.min_delta);
      s.get("stop_window", t.stop_window);
      s.get("stop_delta", t.stop_delta);
      s.get("max_epochs", t.max_epochs);
      s.get("energy_coefficient", t.coefficients.energy);
      s.get("force_coefficient", t.coefficients.force);
    }
    {
      Section s = root.child("probe");
      s.get("rho", c.probe.rho);
      s.get("samples", c.probe.samples);
      s.get("scan_points", c.probe.scan_points);
      s.get("scan_scale", c.probe.scan_scale);
      s.get("split", c.probe.split);
    }
    {
      Section s = root.child("ttf");
      TtfSection& t = c.ttf;
      s.get("sizes", t.sizes);
      s.get("n_seeds", t.n_seeds);
      s.get("temperature", t.temperature);
      s.get("thermostat_tau_steps", t.thermostat_tau_steps);
      s.get("premelt_steps", t.premelt_steps);
      s.get("nvt_steps", t.nvt_steps);
      s.get("max_steps", t.max_steps);
      s.get("energy_drift_tol", t.energy_drift_tol);
      s.get("check_interval", t.check_interval);
      s.get("displacement_safety", t.displacement_safety);
      s.get("overlap_distance", t.overlap_distance);
      s.get("outlier_sigma", t.outlier_sigma);
      s.get("outlier_interval", t.outlier_interval);
      s.get_enum("baseline_source", t.baseline_source, source_from_string);
      s.get_enum("baseline_measure", t.baseline_measure, measure_from_string);
      s.get("workers", t.workers);
    }
    {
      Section s = root.child("sweep");
      s.get("rho_grid", c.sweep.rho_grid);
    }
    {
      Section s = root.child("parallel");
      s.get("workers_list", c.parallel.workers_list);
      s.get("atoms_per_domain", c.parallel.atoms_per_domain);
      s.get("steps", c.parallel.steps);
    }
    {
      Section s = root.child("paths");
      s.get("runs_dir", c.paths.runs_dir);
      s.get("dataset", c.paths.dataset);
      s.get("model", c.paths.model);
    }
  }

  auto check = [&](bool ok, const char* where, const char* what) {
    if (!ok) throw ConfigError(origin + ": " + where + ": " + what);
  };
  check(c.system.n_atoms >= 1, "system.n_atoms", "must be >= 1");
  check(c.system.sim.density > 0.0, "system.density", "must be > 0");
  check(c.system.sim.temperature > 0.0, "system.temperature", "must be > 0");
  check(c.system.sim.dt > 0.0, "system.dt", "must be > 0");
  check(c.system.sim.skin >= 0.0, "system.skin", "must be >= 0");
  check(c.dataset.n_train > 0, "dataset.n_train", "must be > 0");
  check(c.dataset.n_val > 0, "dataset.n_val", "must be > 0");
  check(c.dataset.sample_interval >= 1, "dataset.sample_interval", "must be >= 1");
  check(c.dataset.burn_in_steps >= 0, "dataset.burn_in_steps", "must be >= 0");
  check(c.model.n_basis >= 1, "model.n_basis", "must be >= 1");
  check(!c.model.hidden.empty(), "model.hidden", "needs at least one hidden layer");
  check(std::all_of(c.model.hidden.begin(), c.model.hidden.end(), [](auto h) { return h >= 1; }),
        "model.hidden", "layer sizes must be >= 1");
  check(c.train.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(c.train.lr > 0.0, "train.lr", "must be > 0");
  check(c.train.rho >= 0.0, "train.rho", "must be >= 0");
  check(c.train.max_epochs >= 1, "train.max_epochs", "must be >= 1");
  check(c.train.stop_window >= 1, "train.stop_window", "must be >= 1");
  check(c.probe.rho > 0.0, "probe.rho", "must be > 0");
  check(c.probe.samples >= 1, "probe.samples", "must be >= 1");
  check(c.probe.scan_points >= 2, "probe.scan_points", "must be >= 2");
  check(c.probe.split == "validation" || c.probe.split == "training", "probe.split",
        "must be \"validation\" or \"training\"");
  check(!c.ttf.sizes.empty(), "ttf.sizes", "must not be empty");
  check(c.ttf.n_seeds >= 1, "ttf.n_seeds", "must be >= 1");
  check(c.ttf.temperature > 0.0, "ttf.temperature", "must be > 0");
  check(c.ttf.thermostat_tau_steps > 0.0, "ttf.thermostat_tau_steps", "must be > 0");
  check(c.ttf.premelt_steps >= 0, "ttf.premelt_steps", "must be >= 0");
  check(c.ttf.workers >= 1, "ttf.workers", "must be >= 1");
  check(!c.sweep.rho_grid.empty(), "sweep.rho_grid", "must not be empty");
  check(!c.parallel.workers_list.empty(), "parallel.workers_list", "must not be empty");
  check(c.parallel.steps >= 1, "parallel.steps", "must be >= 1");
  try {
    c.descriptor_config();
    c.ttf_protocol().validate();
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

void set_dotted(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set " + assignment + ": expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->is_object()) throw ConfigError("--set " + key + ": not an object path");
    node = &(*node)[parts[k]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw ConfigError("--set " + key + ": not an object path");
  (*node)[parts.back()] = std::move(value);
}

}  // namespace

DatasetSpec ExperimentConfig::dataset_spec() const {
  DatasetSpec d;
  d.n_train = dataset.n_train;
  d.n_val = dataset.n_val;
  d.n_atoms = system.n_atoms;
  d.sample_interval = dataset.sample_interval;
  d.temperature = system.sim.temperature;
  d.seed = seed;
  d.burn_in_steps = dataset.burn_in_steps;
  return d;
}

DescriptorConfig ExperimentConfig::descriptor_config() const {
  return DescriptorConfig::uniform(model.n_basis, model.first_center, model.r_max);
}

std::vector<std::uint64_t> ExperimentConfig::ttf_seeds(std::int64_t count) const {
  Rng rng = make_stream(seed, "ttf-seeds");
  std::vector<std::uint64_t> out;
  for (std::int64_t k = 0; k < count; ++k) out.push_back(rng() >> 1);
  return out;
}

TtfProtocol ExperimentConfig::ttf_protocol() const {
  TtfProtocol p;
  p.n_atoms = ttf.sizes.empty() ? system.n_atoms : ttf.sizes.front();
  p.temperature = ttf.temperature;
  p.dt = system.sim.dt;
  p.density = system.sim.density;
  p.skin = system.sim.skin;
  p.thermostat_tau_steps = ttf.thermostat_tau_steps;
  p.premelt_steps = ttf.premelt_steps;
  p.premelt_potential = oracle;
  p.nvt_steps = ttf.nvt_steps;
  p.max_steps = ttf.max_steps;
  p.energy_drift_tol = ttf.energy_drift_tol;
  p.check_interval = ttf.check_interval;
  p.displacement_safety = ttf.displacement_safety;
  p.overlap_distance = ttf.overlap_distance;
  p.outlier_sigma = ttf.outlier_sigma;
  p.outlier_interval = ttf.outlier_interval;
  p.baseline_source = ttf.baseline_source;
  p.baseline_measure = ttf.baseline_measure;
  p.seeds = ttf_seeds(ttf.n_seeds);
  return p;
}

std::vector<std::string> preset_names() { return {"desk", "paper-analog", "fragile"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper-analog") {
    c.system.n_atoms = 432;
    c.dataset.n_train = 4500;
    c.dataset.n_val = 500;
    c.ttf.sizes = {432, 864, 1728, 3456};
    return c;
  }
  if (name == "fragile") {
    c.dataset.n_train = 500;
    c.ttf.sizes = {64, 256, 1024};
    c.ttf.temperature = 1.2;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk, paper-analog or fragile)");
}

std::string config_to_json(const ExperimentConfig& config, int indent) {
  return config_json(config).dump(indent);
}

ExperimentConfig config_from_json(const std::string& text, const std::string& origin) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return parse_config(j, origin);
}

ExperimentConfig load_config(const std::string& preset_name,
                             const std::filesystem::path& file,
                             const std::vector<std::string>& overrides) {
  Json j = config_json(preset(preset_name.empty() ? "desk" : preset_name));
  std::string origin = "preset " + j["preset"].get<std::string>();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string() + ": cannot open config file");
    Json patch;
    try {
      patch = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError(file.string() + ": " + e.what());
    }
    if (!patch.is_object()) throw ConfigError(file.string() + ": expected a JSON object");
    if (patch.contains("preset") && patch["preset"].is_string()) {
      Json base = config_json(preset(patch["preset"].get<std::string>()));
      base.merge_patch(patch);
      j = std::move(base);
    } else {
      j.merge_patch(patch);
    }
    origin = file.string();
  }
  for (const std::string& o : overrides) set_dotted(j, o);
  if (!overrides.empty()) origin += " (with --set overrides)";
  return parse_config(j, origin);
}

}  // namespace flatff
