#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "flatff/model.hpp"

namespace flatff {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingMetadata {
  std::string optimizer = "none";
  double rho = 0.0;
  std::int64_t epochs = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::string stop_reason;
  std::uint64_t seed = 0;
  std::string force_loss_normalization = "per-component mean square";
};

struct Checkpoint {
  NeuralForceField model;
  TrainingMetadata metadata;
};

void write_checkpoint(std::ostream& out, const NeuralForceField& model,
                      const TrainingMetadata& metadata);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NeuralForceField& model,
                     const TrainingMetadata& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flatff
