#pragma once

#include <span>

#include "bat/attack.hpp"
#include "bat/model.hpp"

namespace bat {

enum class Method { kAT, kTRADES, kBAT };

enum class PathKind { kLinear };

struct LossSpec {
  Method method = Method::kBAT;
  double beta = 5.0;  // unused by AT
  int bridges_m = 2;  // BAT only
  PathKind path = PathKind::kLinear;

  void validate() const;
};

/// Inner loss each method attacks with: CE for AT and BAT, KL from the clean
/// prediction for TRADES.
InnerLoss default_inner_loss(Method method);

/// Straight segment from the clean example x (t = 0) to x_star (t = 1),
/// sampled at t = k/m for k = 0..m.
struct BridgePath {
  Vector x;
  Vector x_star;
  int m = 1;
};

/// (1 - t) x + t x_star, clamped to [0,1]. Endpoints are returned exactly.
Vector path_point(const BridgePath& path, double t);

/// Matrix form: column j of the result is the point at t on the path from
/// clean.col(j) to adv.col(j).
Matrix path_point(const Matrix& clean, const Matrix& adv, double t);

struct LossResult {
  double value = 0.0;
  ParamGradients grads;
};

// Objectives at a fixed adversarial batch. Columns are examples; the value
// and gradient are means over the batch.

/// mean_j CE(y_j, p(adv_j))
LossResult at_objective(const DenseNet& net, const Matrix& adv, std::span<const int> labels);

/// mean_j CE(y_j, p(x_j)) + beta KL(p(x_j) || p(adv_j)); gradients flow
/// through both network evaluations.
LossResult trades_objective(const DenseNet& net, const Matrix& clean, const Matrix& adv,
                            std::span<const int> labels, double beta);

/// mean_j CE(y_j, p(x_j)) + beta sum_k KL(p(g_k) || p(g_{k+1})) with
/// g_k = path point at k/m. Gradients flow through every path point.
LossResult bat_objective(const DenseNet& net, const Matrix& clean, const Matrix& adv,
                         std::span<const int> labels, double beta, int m);

/// Dispatch on spec.method.
LossResult objective(const DenseNet& net, const LossSpec& spec, const Matrix& clean, const Matrix& adv,
                     std::span<const int> labels);

// Single-example losses that run the attack first.

LossResult at_loss(const DenseNet& net, const Vector& x, int label, const AttackConfig& attack, Rng& rng);
LossResult trades_loss(const DenseNet& net, const Vector& x, int label, double beta, const AttackConfig& attack,
                       Rng& rng);
LossResult bat_loss(const DenseNet& net, const Vector& x, int label, double beta, int m,
                    const AttackConfig& attack, Rng& rng);

}  // namespace bat
