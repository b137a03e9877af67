#include "flatff/dataset_io.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "json_util.hpp"

namespace flatff {

using detail::Json;

namespace {

Json spec_to_json(const DatasetSpec& s) {
  return Json{{"n_train", s.n_train},
              {"n_val", s.n_val},
              {"n_atoms", s.n_atoms},
              {"sample_interval", s.sample_interval},
              {"temperature", s.temperature},
              {"seed", s.seed},
              {"burn_in_steps", s.burn_in_steps}};
}

DatasetSpec spec_from_json(const Json& j) {
  DatasetSpec s;
  s.n_train = j.at("n_train").get<std::int64_t>();
  s.n_val = j.at("n_val").get<std::int64_t>();
  s.n_atoms = j.at("n_atoms").get<std::int64_t>();
  s.sample_interval = j.at("sample_interval").get<std::int64_t>();
  s.temperature = j.at("temperature").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.burn_in_steps = j.at("burn_in_steps").get<std::int64_t>();
  return s;
}

Json example_to_json(const TrainExample& e) {
  return Json{{"positions", detail::vec3_list_to_json(e.positions)},
              {"box_length", e.box_length},
              {"energy", e.energy},
              {"forces", detail::vec3_list_to_json(e.forces)}};
}

TrainExample example_from_json(const Json& j) {
  TrainExample e;
  e.positions = detail::vec3_list_from_json(j.at("positions"));
  e.box_length = j.at("box_length").get<double>();
  e.energy = j.at("energy").get<double>();
  e.forces = detail::vec3_list_from_json(j.at("forces"));
  if (e.forces.size() != e.positions.size()) {
    throw std::runtime_error("example has mismatched positions/forces");
  }
  return e;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const Json header{{"format", "flatff-dataset"},
                    {"version", kDatasetFormatVersion},
                    {"spec", spec_to_json(dataset.spec)}};
  out << header.dump() << '\n';
  for (const auto& e : dataset.train) out << example_to_json(e).dump() << '\n';
  for (const auto& e : dataset.val) out << example_to_json(e).dump() << '\n';
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file is empty");
  const Json header = Json::parse(line);
  if (header.value("format", "") != "flatff-dataset") {
    throw std::runtime_error("not a flatff dataset file");
  }
  if (header.at("version").get<int>() != kDatasetFormatVersion) {
    throw std::runtime_error("unsupported dataset format version");
  }
  Dataset d;
  d.spec = spec_from_json(header.at("spec"));
  std::int64_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainExample e = example_from_json(Json::parse(line));
    (index < d.spec.n_train ? d.train : d.val).push_back(std::move(e));
    ++index;
  }
  if (index != d.spec.n_train + d.spec.n_val) {
    throw std::runtime_error("dataset holds " + std::to_string(index) +
                             " examples, header declares " +
                             std::to_string(d.spec.n_train + d.spec.n_val));
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  auto out = detail::open_output(path);
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_dataset(in);
}

}  // namespace flatff
