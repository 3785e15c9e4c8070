#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "bat/model.hpp"

namespace bat {

using Rng = std::mt19937_64;

enum class InnerLoss {
  kCrossEntropy,  // KL(y || p(x'))
  kKlFromClean,   // KL(p(x) || p(x')), p(x) held constant
};

/// L-infinity PGD settings. `step_size` is the per-step sign-ascent length.
struct AttackConfig {
  double epsilon = 0.0;
  int steps = 0;
  double step_size = 0.0;
  int restarts = 1;
  bool random_start = false;
  InnerLoss inner_loss = InnerLoss::kCrossEntropy;

  void validate() const;
};

/// {x' : |x' - center|_inf <= epsilon} intersected with [0,1]^d.
struct PerturbationBall {
  Vector center;
  double epsilon = 0.0;
};

Vector project(const PerturbationBall& ball, const Vector& x);

/// Column-wise projection of `x` onto the balls around the columns of `center`.
Matrix project(const Matrix& center, double epsilon, const Matrix& x);

/// Inner-loss value for each column of `adv` (same layout as `clean`).
Vector inner_losses(const DenseNet& net, const Matrix& clean, const Matrix& adv, std::span<const int> labels,
                    InnerLoss kind);

/// Batched PGD: every column of `clean` is attacked independently. Among
/// restarts the iterate with the largest final inner loss wins; ties keep
/// the earliest restart. Draws random starts from `rng` in column order.
Matrix pgd(const DenseNet& net, const Matrix& clean, std::span<const int> labels, const AttackConfig& cfg,
           Rng& rng);

Vector pgd(const DenseNet& net, const Vector& x, int label, const AttackConfig& cfg, Rng& rng);

/// One full-epsilon signed step from x with the cross-entropy inner loss.
Vector fgsm(const DenseNet& net, const Vector& x, int label, double epsilon);

}  // namespace bat
