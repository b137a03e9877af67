#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flatff/loss.hpp"
#include "flatff/oracle.hpp"
#include "flatff/optim.hpp"

namespace flatff {

/// Anything the training loop can minimise: minibatch gradients over an
/// indexed training set plus a full validation loss.
class TrainingProblem {
 public:
  virtual ~TrainingProblem() = default;
  virtual std::size_t train_size() const = 0;
  virtual LossValue gradient(std::span<const std::size_t> batch,
                             std::span<const double> w,
                             std::vector<double>& grad) const = 0;
  virtual LossValue validation_loss(std::span<const double> w) const = 0;
};

/// Force matching of a NeuralForceField against oracle examples.
class ForceFieldProblem final : public TrainingProblem {
 public:
  ForceFieldProblem(const NeuralForceField& model, std::span<const TrainExample> train,
                    std::span<const TrainExample> val, LossCoefficients coefficients = {});

  std::size_t train_size() const override { return train_.size(); }
  LossValue gradient(std::span<const std::size_t> batch, std::span<const double> w,
                     std::vector<double>& grad) const override;
  LossValue validation_loss(std::span<const double> w) const override;
  LossValue training_loss(std::span<const double> w) const;

  const ForceFieldLoss& loss() const { return loss_; }

 private:
  ForceFieldLoss loss_;
  std::vector<PreparedExample> train_;
  std::vector<PreparedExample> val_;
};

enum class OptimizerKind { adam, sam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

/// Defaults mirror the reference training table (batch 4, peak rate 2e-3,
/// plateau patience 50 and factor 0.5, stop when the validation loss gains no
/// more than 3e-3 over 100 epochs) with a 2000-epoch cap.
struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double rho = 0.005;
  double lr = 2e-3;
  std::size_t batch_size = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t patience = 50;
  double factor = 0.5;
  double min_delta = 0.0;
  std::size_t stop_window = 100;
  double stop_delta = 3e-3;
  std::int64_t max_epochs = 2000;
  LossCoefficients coefficients;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double energy_term = 0.0;
  double force_term = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

enum class StopReason { converged, max_epochs };

std::string to_string(StopReason reason);

struct TrainReport {
  std::int64_t epochs_run = 0;
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::max_epochs;
  std::int64_t best_epoch = 0;
  double best_val_loss = 0.0;
};

struct TrainResult {
  ParamVector params;  // weights with the best validation loss
  TrainReport report;
};

/// Seeded minibatch training. Each epoch: shuffled pass of optimizer steps,
/// validation loss, scheduler update, stopping check. Deterministic in
/// (problem, initial weights, config, seed).
TrainResult train(const TrainingProblem& problem, ParamVector initial,
                  const TrainConfig& config, std::uint64_t seed);

struct ForceFieldTraining {
  NeuralForceField model;
  TrainReport report;
};

/// Builds the initial model from the training split ("init" stream) and
/// trains it ("shuffle" stream), both derived from `seed`.
ForceFieldTraining train_force_field(const Dataset& data,
                                     const DescriptorConfig& descriptors,
                                     const std::vector<std::size_t>& hidden,
                                     const TrainConfig& config, std::uint64_t seed);

/// CSV: epoch,train_loss,energy_term,force_term,val_loss,lr,seconds
void write_training_log(std::ostream& out, const TrainReport& report);

}  // namespace flatff
