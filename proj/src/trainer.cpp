#include "flatff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "flatff/errors.hpp"

namespace flatff {

ForceFieldProblem::ForceFieldProblem(const NeuralForceField& model,
                                     std::span<const TrainExample> train,
                                     std::span<const TrainExample> val,
                                     LossCoefficients coefficients)
    : loss_(model, coefficients), train_(loss_.prepare(train)), val_(loss_.prepare(val)) {
  if (train_.empty()) throw std::invalid_argument("training set is empty");
}

LossValue ForceFieldProblem::gradient(std::span<const std::size_t> batch,
                                      std::span<const double> w,
                                      std::vector<double>& grad) const {
  std::vector<const PreparedExample*> examples;
  examples.reserve(batch.size());
  for (std::size_t i : batch) examples.push_back(&train_.at(i));
  return loss_.loss_and_gradient(std::span<const PreparedExample* const>(examples), w, grad);
}

LossValue ForceFieldProblem::validation_loss(std::span<const double> w) const {
  return val_.empty() ? loss_.loss(train_, w) : loss_.loss(val_, w);
}

LossValue ForceFieldProblem::training_loss(std::span<const double> w) const {
  return loss_.loss(train_, w);
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sam ? "sam" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sam") return OptimizerKind::sam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected adam or sam)");
}

std::string to_string(StopReason reason) {
  return reason == StopReason::converged ? "converged" : "max_epochs";
}

TrainResult train(const TrainingProblem& problem, ParamVector initial,
                  const TrainConfig& config, std::uint64_t seed) {
  if (problem.train_size() == 0) throw std::invalid_argument("training set is empty");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (config.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");

  Rng shuffle_rng = make_stream(seed, "shuffle");
  ParamVector w = std::move(initial);
  AdamState adam = AdamState::zeros(w.size(), config.lr, config.beta1, config.beta2,
                                    config.eps);
  const SamConfig sam{config.optimizer == OptimizerKind::sam ? config.rho : 0.0};
  SchedulerState sched;
  sched.patience = config.patience;
  sched.factor = config.factor;
  sched.min_delta = config.min_delta;
  sched.current_lr = config.lr;

  std::vector<std::size_t> order(problem.train_size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> val_history;
  TrainResult result;
  result.params = w;
  result.report.best_val_loss = std::numeric_limits<double>::infinity();

  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    adam.eta = sched.current_lr;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.current_lr;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const GradientFn grad_fn = [&](std::span<const double> at, std::vector<double>& g) {
        return problem.gradient(batch, at, g);
      };
      LossValue lv;
      try {
        lv = sam_update(w, grad_fn, adam, sam);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + ": " + e.what());
      }
      rec.train_loss += lv.total;
      rec.energy_term += lv.energy_term;
      rec.force_term += lv.force_term;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    rec.train_loss *= inv;
    rec.energy_term *= inv;
    rec.force_term *= inv;
    rec.val_loss = problem.validation_loss(w).total;
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": validation loss is not finite");
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.report.epochs.push_back(rec);
    result.report.epochs_run = epoch;

    if (rec.val_loss < result.report.best_val_loss) {
      result.report.best_val_loss = rec.val_loss;
      result.report.best_epoch = epoch;
      result.params = w;
    }
    sched = scheduler_update(sched, rec.val_loss);
    val_history.push_back(rec.val_loss);
    if (check_stop(val_history, config.stop_window, config.stop_delta)) {
      result.report.stop_reason = StopReason::converged;
      return result;
    }
  }
  result.report.stop_reason = StopReason::max_epochs;
  return result;
}

ForceFieldTraining train_force_field(const Dataset& data,
                                     const DescriptorConfig& descriptors,
                                     const std::vector<std::size_t>& hidden,
                                     const TrainConfig& config, std::uint64_t seed) {
  Rng init_rng = make_stream(seed, "init");
  NeuralForceField model = make_initial_model(data.train, descriptors, hidden, init_rng);
  const ForceFieldProblem problem(model, data.train, data.val, config.coefficients);
  TrainResult r = train(problem, model.params(), config, seed);
  model.set_params(std::move(r.params));
  return ForceFieldTraining{std::move(model), std::move(r.report)};
}

void write_training_log(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,energy_term,force_term,val_loss,lr,seconds\n";
  char line[512];
  for (const EpochRecord& r : report.epochs) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                  static_cast<long long>(r.epoch), r.train_loss, r.energy_term,
                  r.force_term, r.val_loss, r.lr, r.seconds);
    out << line;
  }
}

}  // namespace flatff
