#include "flatff/checkpoint.hpp"

#include <istream>
#include <iterator>
#include <ostream>

#include "json_util.hpp"

namespace flatff {

using detail::Json;

void write_checkpoint(std::ostream& out, const NeuralForceField& model,
                      const TrainingMetadata& m) {
  const auto& d = model.descriptors();
  Json j{
      {"format", "flatff-model"},
      {"version", kCheckpointFormatVersion},
      {"descriptor", {{"r_max", d.r_max}, {"centers", d.centers}, {"width", d.width}}},
      {"architecture",
       {{"layer_sizes", model.architecture().layer_sizes},
        {"activation", model.architecture().activation}}},
      {"normalization",
       {{"mean", model.normalization().mean}, {"scale", model.normalization().scale}}},
      {"weights", model.params()},
      {"metadata",
       {{"optimizer", m.optimizer},
        {"rho", m.rho},
        {"epochs", m.epochs},
        {"final_train_loss", detail::number_or_null(m.final_train_loss)},
        {"final_val_loss", detail::number_or_null(m.final_val_loss)},
        {"best_val_loss", detail::number_or_null(m.best_val_loss)},
        {"stop_reason", m.stop_reason},
        {"seed", m.seed},
        {"force_loss_normalization", m.force_loss_normalization}}}};
  out << j.dump(1) << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  const Json j = Json::parse(std::string(std::istreambuf_iterator<char>(in), {}));
  if (j.value("format", "") != "flatff-model") {
    throw std::runtime_error("not a flatff model checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  DescriptorConfig d;
  d.r_max = j.at("descriptor").at("r_max").get<double>();
  d.centers = j.at("descriptor").at("centers").get<std::vector<double>>();
  d.width = j.at("descriptor").at("width").get<double>();
  MlpArchitecture arch;
  arch.layer_sizes = j.at("architecture").at("layer_sizes").get<std::vector<std::size_t>>();
  arch.activation = j.at("architecture").at("activation").get<std::string>();
  Normalization norm;
  norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
  norm.scale = j.at("normalization").at("scale").get<std::vector<double>>();
  auto weights = j.at("weights").get<std::vector<double>>();

  TrainingMetadata m;
  const Json& mj = j.at("metadata");
  m.optimizer = mj.value("optimizer", "none");
  m.rho = mj.value("rho", 0.0);
  m.epochs = mj.value("epochs", std::int64_t{0});
  m.final_train_loss = detail::number_or_nan(mj.value("final_train_loss", Json()));
  m.final_val_loss = detail::number_or_nan(mj.value("final_val_loss", Json()));
  m.best_val_loss = detail::number_or_nan(mj.value("best_val_loss", Json()));
  m.stop_reason = mj.value("stop_reason", "");
  m.seed = mj.value("seed", std::uint64_t{0});
  m.force_loss_normalization = mj.value("force_loss_normalization", "");
  return Checkpoint{NeuralForceField(d, arch, norm, std::move(weights)), m};
}

void save_checkpoint(const std::filesystem::path& path, const NeuralForceField& model,
                     const TrainingMetadata& metadata) {
  auto out = detail::open_output(path);
  write_checkpoint(out, model, metadata);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_checkpoint(in);
}

}  // namespace flatff
