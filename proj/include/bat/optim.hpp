#pragma once

#include <vector>

#include "bat/model.hpp"

namespace bat {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double rate = 1e-3;  // base learning rate, modulated by the schedule
  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct SgdMomentumState {
  ParamSet velocity;
};

/// v <- momentum * v + (g + wd * theta); theta <- theta - rate * v.
void sgd_momentum_step(ParamSet& params, const ParamGradients& grads, SgdMomentumState& state,
                       const OptimizerConfig& hyper, double rate);

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  int step = 0;
};

/// Bias-corrected Adam with weight decay added to the gradient:
///   g' = g + wd * theta
///   m <- b1 m + (1 - b1) g',  v <- b2 v + (1 - b2) g'^2
///   theta <- theta - rate * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
void adam_step(ParamSet& params, const ParamGradients& grads, AdamState& state, const OptimizerConfig& hyper,
               double rate);

/// Owns the state of whichever optimizer the config selects.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const ParamSet& like);
  void step(ParamSet& params, const ParamGradients& grads, double rate);

 private:
  OptimizerConfig cfg_;
  SgdMomentumState sgd_;
  AdamState adam_;
};

enum class ScheduleKind { kConstant, kStepDecay, kCyclic };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base_rate = 1e-3;
  std::vector<int> decay_epochs;  // STEP_DECAY: multiply by decay_factor at each
  double decay_factor = 0.1;
  double max_rate = 0.3;  // CYCLIC peak
  int total_epochs = 1;
  int batches_per_epoch = 1;
};

/// Learning rate for the given (0-based) epoch and batch. CYCLIC is a single
/// triangle: 0 at the first step, max_rate at the midpoint of the run, back
/// towards 0 at the end.
double lr_at(const ScheduleConfig& schedule, int epoch, int batch_index);

}  // namespace bat
