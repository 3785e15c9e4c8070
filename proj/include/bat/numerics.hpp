#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace bat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Unnormalized network outputs. Must be finite.
using LogitVector = Vector;
/// Nonnegative entries summing to one, length >= 2.
using ProbVector = Vector;

/// Floor applied to probabilities before they appear in a denominator or a log.
inline constexpr double kProbFloor = 1e-12;

struct OneHotLabel {
  int class_index = 0;
  int dimension = 0;
};

bool all_finite(const Vector& v);

/// Throws InvalidArgument unless `p` is a valid probability vector
/// (length >= 2, entries >= 0, sum within 1e-6 of one).
void check_prob_vector(const ProbVector& p);

/// Max-shifted softmax. Throws InvalidArgument on non-finite input.
ProbVector softmax(const LogitVector& z);

/// z - logsumexp(z). Finite for any finite input.
Vector log_softmax(const LogitVector& z);

/// KL(p || q) = sum_i p_i log(p_i / q_i) in nats, with q and the log argument
/// floored at kProbFloor. Terms with p_i == 0 contribute nothing.
double kl_div(const ProbVector& p, const ProbVector& q);

/// KL(softmax(zp) || softmax(zq)) evaluated entirely in log space.
double kl_div_logits(const LogitVector& zp, const LogitVector& zq);

/// -log p_y (equal to KL(onehot(y) || p)).
double cross_entropy(const OneHotLabel& y, const ProbVector& p);

/// -log softmax(z)_y.
double cross_entropy_logits(int label, const LogitVector& z);

/// Gradients with respect to logits of any function of softmax(z) sum to
/// zero. Overwrites the entry of the most probable class with minus the sum of
/// the others, which avoids the 1 - p cancellation when p is nearly one-hot.
void rebalance_logit_gradient(Vector& g, const ProbVector& p);

/// d/dz of -log softmax(z)_label, i.e. softmax(z) - onehot(label).
Vector cross_entropy_grad_logits(int label, const LogitVector& z);

/// Gradients of KL(softmax(zp) || softmax(zq)) with respect to both logit vectors.
struct KlLogitGradient {
  Vector wrt_first;
  Vector wrt_second;
};
KlLogitGradient kl_grad_logits(const LogitVector& zp, const LogitVector& zq);

/// Elementwise log(p_i / q_i) with the usual floor.
Vector log_alpha(const ProbVector& p, const ProbVector& q);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax(const Vector& v);

/// Index of the largest entry other than `skip`; ties resolve to the lowest index.
int argmax_excluding(const Vector& v, int skip);

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace bat
