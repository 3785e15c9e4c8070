#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bat/attack.hpp"
#include "bat/data.hpp"
#include "bat/model.hpp"

namespace bat {

/// Q1: robust (M(x*) > 0). Q3: wrong on the clean input (M(x) <= 0).
/// Q4: correct on x, broken by x*. Q2 (wrong on x, right on x*) cannot occur
/// when the attack candidate set contains x.
enum class Quadrant { kQ1, kQ3, kQ4 };

const char* to_string(Quadrant q);

/// Throws InvalidArgument for the Q2 sign pattern.
Quadrant classify_quadrant(double margin_clean, double margin_adv);

struct DiagnosticsRecord {
  int label = 0;
  double margin_clean = 0.0;
  double margin_adv = 0.0;
  double smoothness_kl = 0.0;  // KL(p || p*)
  double log_alpha_y = 0.0;    // log(p_y / p*_y)
  double log_alpha_t = 0.0;    // log(p_t / p*_t), t = argmax_{i != y} p*_i
  Quadrant quadrant = Quadrant::kQ1;
};

DiagnosticsRecord make_record(const LogitVector& clean_logits, const LogitVector& adv_logits, int label);

struct ErrorDecomposition {
  std::size_t total = 0;
  std::size_t natural_errors = 0;   // Q3
  std::size_t boundary_errors = 0;  // Q4
  std::size_t robust_errors = 0;    // not Q1
  double r_nat = 0.0;
  double r_bdy = 0.0;
  double r_rob = 0.0;
};

ErrorDecomposition quadrant_decomposition(std::span<const DiagnosticsRecord> records);

/// p_y - max_{i != y} p_i. A tie gives 0, which counts as misclassified.
double margin(const ProbVector& p, int label);

/// dM/dlogits with the runner-up class t held fixed.
Vector margin_grad_logits(const LogitVector& z, int label);

/// Parameter gradient of the batch-mean margin.
ParamGradients mean_margin_gradient(const DenseNet& net, const Matrix& inputs, std::span<const int> labels);

/// Angle between two parameter vectors in degrees, or nullopt if either is zero.
std::optional<double> angle_degrees(const ParamSet& a, const ParamSet& b);

struct GradAlignment {
  std::optional<double> angle_ce;  // between -grad KL(y || p) and grad M(x)
  std::optional<double> angle_kl;  // between -grad KL(p || p*) and grad M(x)
};

GradAlignment grad_alignment(const DenseNet& net, const Vector& x, int label, const Vector& x_star);

/// -<grad mean margin, loss_grads>.
double expected_margin_increase(const DenseNet& net, const Matrix& inputs, std::span<const int> labels,
                                const ParamGradients& loss_grads);

/// |grad| / |loss|; nullopt when the loss is zero.
std::optional<double> normalized_grad_norm(double loss_value, const ParamGradients& grads);

struct LogAlphaPair {
  double log_alpha_y = 0.0;
  double neg_log_alpha_t = 0.0;
};

/// Attacks every example and reports (log alpha_y, -log alpha_t).
std::vector<LogAlphaPair> log_alpha_stats(const DenseNet& net, const Dataset& data, const AttackConfig& attack,
                                          Rng& rng);

}  // namespace bat
