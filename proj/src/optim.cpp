#include "bat/optim.hpp"

#include <cmath>

#include "bat/errors.hpp"

namespace bat {

void OptimizerConfig::validate() const {
  if (!(rate > 0.0)) throw InvalidArgument("optimizer: rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("optimizer: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("optimizer: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("optimizer: Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("optimizer: eps must be > 0");
}

namespace {

void require_shapes(const ParamSet& params, const ParamGradients& grads) {
  if (!params.same_shape(grads)) throw DimensionMismatch("optimizer: gradient shape does not match parameters");
}

ParamSet decayed(const ParamSet& params, const ParamGradients& grads, double weight_decay) {
  ParamSet g = grads;
  if (weight_decay != 0.0) g.axpy(weight_decay, params);
  return g;
}

}  // namespace

void sgd_momentum_step(ParamSet& params, const ParamGradients& grads, SgdMomentumState& state,
                       const OptimizerConfig& hyper, double rate) {
  require_shapes(params, grads);
  if (state.velocity.weights.empty()) state.velocity = ParamSet::zeros_like(params);
  require_shapes(params, state.velocity);
  const ParamSet g = decayed(params, grads, hyper.weight_decay);
  state.velocity *= hyper.momentum;
  state.velocity += g;
  params.axpy(-rate, state.velocity);
}

void adam_step(ParamSet& params, const ParamGradients& grads, AdamState& state, const OptimizerConfig& hyper,
               double rate) {
  require_shapes(params, grads);
  if (state.first_moment.weights.empty()) {
    state.first_moment = ParamSet::zeros_like(params);
    state.second_moment = ParamSet::zeros_like(params);
  }
  require_shapes(params, state.first_moment);
  const ParamSet g = decayed(params, grads, hyper.weight_decay);
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, state.step);
  const double c2 = 1.0 - std::pow(hyper.beta2, state.step);

  auto update = [&](auto& theta, auto& m, auto& v, const auto& grad) {
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * grad;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * grad.cwiseProduct(grad);
    theta.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.eps);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l], g.weights[l]);
    update(params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l], g.biases[l]);
  }
}

Optimizer::Optimizer(const OptimizerConfig& cfg, const ParamSet& like) : cfg_(cfg) {
  cfg_.validate();
  sgd_.velocity = ParamSet::zeros_like(like);
  adam_.first_moment = ParamSet::zeros_like(like);
  adam_.second_moment = ParamSet::zeros_like(like);
}

void Optimizer::step(ParamSet& params, const ParamGradients& grads, double rate) {
  if (cfg_.kind == OptimizerKind::kSgdMomentum) {
    sgd_momentum_step(params, grads, sgd_, cfg_, rate);
  } else {
    adam_step(params, grads, adam_, cfg_, rate);
  }
}

double lr_at(const ScheduleConfig& schedule, int epoch, int batch_index) {
  switch (schedule.kind) {
    case ScheduleKind::kConstant:
      return schedule.base_rate;
    case ScheduleKind::kStepDecay: {
      double rate = schedule.base_rate;
      for (int e : schedule.decay_epochs) {
        if (epoch >= e) rate *= schedule.decay_factor;
      }
      return rate;
    }
    case ScheduleKind::kCyclic: {
      const double total = static_cast<double>(schedule.total_epochs) * schedule.batches_per_epoch;
      const double step = static_cast<double>(epoch) * schedule.batches_per_epoch + batch_index;
      const double phase = total > 0.0 ? step / total : 0.0;
      return schedule.max_rate * std::max(0.0, 1.0 - std::abs(2.0 * phase - 1.0));
    }
  }
  throw InvalidArgument("unknown schedule kind");
}

}  // namespace bat
