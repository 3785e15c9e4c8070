#include "bat/diagnostics.hpp"

#include <cmath>
#include <numbers>

#include "bat/errors.hpp"

namespace bat {

const char* to_string(Quadrant q) {
  switch (q) {
    case Quadrant::kQ1:
      return "Q1";
    case Quadrant::kQ3:
      return "Q3";
    case Quadrant::kQ4:
      return "Q4";
  }
  return "?";
}

Quadrant classify_quadrant(double margin_clean, double margin_adv) {
  if (margin_clean <= 0.0) {
    if (margin_adv > 0.0) throw InvalidArgument("record lies in quadrant II (wrong on x, right on x*)");
    return Quadrant::kQ3;
  }
  return margin_adv > 0.0 ? Quadrant::kQ1 : Quadrant::kQ4;
}

double margin(const ProbVector& p, int label) {
  if (p.size() < 2) throw InvalidArgument("margin: need at least two classes");
  if (label < 0 || label >= p.size()) throw InvalidArgument("margin: label out of range");
  return p[label] - p[argmax_excluding(p, label)];
}

DiagnosticsRecord make_record(const LogitVector& clean_logits, const LogitVector& adv_logits, int label) {
  const ProbVector p = softmax(clean_logits);
  const ProbVector p_adv = softmax(adv_logits);
  DiagnosticsRecord r;
  r.label = label;
  r.margin_clean = margin(p, label);
  r.margin_adv = margin(p_adv, label);
  r.smoothness_kl = kl_div_logits(clean_logits, adv_logits);
  const Vector la = log_softmax(clean_logits) - log_softmax(adv_logits);
  r.log_alpha_y = la[label];
  r.log_alpha_t = la[argmax_excluding(p_adv, label)];
  r.quadrant = classify_quadrant(r.margin_clean, r.margin_adv);
  return r;
}

ErrorDecomposition quadrant_decomposition(std::span<const DiagnosticsRecord> records) {
  if (records.empty()) throw InvalidArgument("quadrant_decomposition: no records");
  ErrorDecomposition out;
  out.total = records.size();
  for (const auto& r : records) {
    // Re-derive from the margins so a mislabeled record cannot skew counts.
    const Quadrant q = classify_quadrant(r.margin_clean, r.margin_adv);
    if (q == Quadrant::kQ3) ++out.natural_errors;
    if (q == Quadrant::kQ4) ++out.boundary_errors;
    if (q != Quadrant::kQ1) ++out.robust_errors;
  }
  const auto n = static_cast<double>(out.total);
  out.r_nat = static_cast<double>(out.natural_errors) / n;
  out.r_bdy = static_cast<double>(out.boundary_errors) / n;
  out.r_rob = static_cast<double>(out.robust_errors) / n;
  return out;
}

Vector margin_grad_logits(const LogitVector& z, int label) {
  const ProbVector p = softmax(z);
  const int t = argmax_excluding(p, label);
  // J^T (e_y - e_t) with the symmetric softmax Jacobian J = diag(p) - p p^T.
  Vector g = -(p[label] - p[t]) * p;
  g[label] += p[label];
  g[t] -= p[t];
  rebalance_logit_gradient(g, p);
  return g;
}

ParamGradients mean_margin_gradient(const DenseNet& net, const Matrix& inputs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols() || inputs.cols() == 0) {
    throw DimensionMismatch("margin gradient: label count does not match batch");
  }
  const ForwardTrace trace = forward(net, inputs);
  Matrix d(net.output_dim(), inputs.cols());
  const double scale = 1.0 / static_cast<double>(inputs.cols());
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) d.col(j) = scale * margin_grad_logits(trace.logits().col(j), labels[j]);
  return backward_params(net, trace, d);
}

std::optional<double> angle_degrees(const ParamSet& a, const ParamSet& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  // half-angle form
  const Vector ua = a.flatten() / na;
  const Vector ub = b.flatten() / nb;
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm()) * 180.0 / std::numbers::pi;
}

GradAlignment grad_alignment(const DenseNet& net, const Vector& x, int label, const Vector& x_star) {
  const int labels[] = {label};
  const ParamGradients margin_grad = mean_margin_gradient(net, Matrix(x), labels);

  const ForwardTrace clean = forward(net, x);
  const ForwardTrace adv = forward(net, x_star);
  const Vector z = clean.logits().col(0);
  const Vector z_adv = adv.logits().col(0);

  const ParamGradients ce_grad = backward_params(net, clean, Matrix(cross_entropy_grad_logits(label, z)));
  const KlLogitGradient kl = kl_grad_logits(z, z_adv);
  ParamGradients kl_grad = backward_params(net, clean, Matrix(kl.wrt_first));
  kl_grad += backward_params(net, adv, Matrix(kl.wrt_second));

  return {angle_degrees(-1.0 * ce_grad, margin_grad), angle_degrees(-1.0 * kl_grad, margin_grad)};
}

double expected_margin_increase(const DenseNet& net, const Matrix& inputs, std::span<const int> labels,
                                const ParamGradients& loss_grads) {
  if (!loss_grads.same_shape(net.params)) throw DimensionMismatch("expected_margin_increase: shape mismatch");
  return -mean_margin_gradient(net, inputs, labels).dot(loss_grads);
}

std::optional<double> normalized_grad_norm(double loss_value, const ParamGradients& grads) {
  if (loss_value == 0.0) return std::nullopt;
  return grads.norm() / std::abs(loss_value);
}

std::vector<LogAlphaPair> log_alpha_stats(const DenseNet& net, const Dataset& data, const AttackConfig& attack,
                                          Rng& rng) {
  const Matrix adv = pgd(net, data.features, data.labels, attack, rng);
  const Matrix z = logits(net, data.features);
  const Matrix z_adv = logits(net, adv);
  std::vector<LogAlphaPair> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index j = 0; j < data.size(); ++j) {
    const int y = data.labels[static_cast<std::size_t>(j)];
    const Vector la = log_softmax(z.col(j)) - log_softmax(z_adv.col(j));
    const int t = argmax_excluding(softmax(z_adv.col(j)), y);
    out.push_back({la[y], -la[t]});
  }
  return out;
}

}  // namespace bat
