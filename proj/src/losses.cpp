#include "bat/losses.hpp"

#include <string>

#include "bat/errors.hpp"

namespace bat {

void LossSpec::validate() const {
  if (!(beta >= 0.0)) throw InvalidArgument("loss: beta must be >= 0");
  if (method == Method::kBAT && bridges_m < 1) throw InvalidArgument("loss: bridge count m must be >= 1");
}

InnerLoss default_inner_loss(Method method) {
  return method == Method::kTRADES ? InnerLoss::kKlFromClean : InnerLoss::kCrossEntropy;
}

Vector path_point(const BridgePath& path, double t) {
  if (path.x.size() != path.x_star.size()) throw DimensionMismatch("path: endpoint dimension mismatch");
  return path_point(Matrix(path.x), Matrix(path.x_star), t).col(0);
}

Matrix path_point(const Matrix& clean, const Matrix& adv, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("path: t must lie in [0, 1]");
  if (clean.rows() != adv.rows() || clean.cols() != adv.cols()) {
    throw DimensionMismatch("path: endpoint shape mismatch");
  }
  if (t == 0.0) return clean;
  if (t == 1.0) return adv;
  return ((1.0 - t) * clean + t * adv).cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

void check_batch(const DenseNet& net, const Matrix& x, std::span<const int> labels) {
  if (x.rows() != net.input_dim()) throw DimensionMismatch("loss: input dimension mismatch");
  if (static_cast<Eigen::Index>(labels.size()) != x.cols() || x.cols() == 0) {
    throw DimensionMismatch("loss: label count does not match batch size");
  }
}

void check_pair(const Matrix& clean, const Matrix& adv) {
  if (clean.rows() != adv.rows() || clean.cols() != adv.cols()) {
    throw DimensionMismatch("loss: clean and adversarial batches differ in shape");
  }
}

}  // namespace

LossResult at_objective(const DenseNet& net, const Matrix& adv, std::span<const int> labels) {
  check_batch(net, adv, labels);
  const auto n = adv.cols();
  const double scale = 1.0 / static_cast<double>(n);
  const ForwardTrace trace = forward(net, adv);
  Matrix dlogits(net.output_dim(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    total += cross_entropy_logits(labels[j], trace.logits().col(j));
    dlogits.col(j) = scale * cross_entropy_grad_logits(labels[j], trace.logits().col(j));
  }
  return {total * scale, backward_params(net, trace, dlogits)};
}

LossResult trades_objective(const DenseNet& net, const Matrix& clean, const Matrix& adv,
                            std::span<const int> labels, double beta) {
  check_batch(net, clean, labels);
  check_pair(clean, adv);
  const auto n = clean.cols();
  const double scale = 1.0 / static_cast<double>(n);

  const ForwardTrace clean_trace = forward(net, clean);
  const ForwardTrace adv_trace = forward(net, adv);
  Matrix d_clean(net.output_dim(), n);
  Matrix d_adv(net.output_dim(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector z = clean_trace.logits().col(j);
    const Vector z_adv = adv_trace.logits().col(j);
    const KlLogitGradient kl = kl_grad_logits(z, z_adv);
    total += cross_entropy_logits(labels[j], z) + beta * kl_div_logits(z, z_adv);
    d_clean.col(j) = scale * (cross_entropy_grad_logits(labels[j], z) + beta * kl.wrt_first);
    d_adv.col(j) = scale * beta * kl.wrt_second;
  }
  ParamGradients grads = backward_params(net, clean_trace, d_clean);
  grads += backward_params(net, adv_trace, d_adv);
  return {total * scale, std::move(grads)};
}

LossResult bat_objective(const DenseNet& net, const Matrix& clean, const Matrix& adv,
                         std::span<const int> labels, double beta, int m) {
  if (m < 1) throw InvalidArgument("bat: bridge count m must be >= 1");
  check_batch(net, clean, labels);
  check_pair(clean, adv);
  const auto n = clean.cols();
  const auto d = clean.rows();
  const double scale = 1.0 / static_cast<double>(n);

  // All m + 1 path points go through the network in one pass; block k holds
  // the points at t = k/m.
  Matrix stacked(d, n * (m + 1));
  for (int k = 0; k <= m; ++k) {
    stacked.middleCols(k * n, n) = path_point(clean, adv, static_cast<double>(k) / m);
  }
  const ForwardTrace trace = forward(net, stacked);
  const Matrix& z = trace.logits();

  Matrix dlogits = Matrix::Zero(net.output_dim(), n * (m + 1));
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    total += cross_entropy_logits(labels[j], z.col(j));
    dlogits.col(j) += scale * cross_entropy_grad_logits(labels[j], z.col(j));
    for (int k = 0; k < m; ++k) {
      const Eigen::Index from = k * n + j;
      const Eigen::Index to = (k + 1) * n + j;
      const KlLogitGradient kl = kl_grad_logits(z.col(from), z.col(to));
      total += beta * kl_div_logits(z.col(from), z.col(to));
      dlogits.col(from) += scale * beta * kl.wrt_first;
      dlogits.col(to) += scale * beta * kl.wrt_second;
    }
  }
  return {total * scale, backward_params(net, trace, dlogits)};
}

LossResult objective(const DenseNet& net, const LossSpec& spec, const Matrix& clean, const Matrix& adv,
                     std::span<const int> labels) {
  spec.validate();
  switch (spec.method) {
    case Method::kAT:
      return at_objective(net, adv, labels);
    case Method::kTRADES:
      return trades_objective(net, clean, adv, labels, spec.beta);
    case Method::kBAT:
      return bat_objective(net, clean, adv, labels, spec.beta, spec.bridges_m);
  }
  throw InvalidArgument("loss: unknown method");
}

namespace {

void require_inner(const AttackConfig& attack, InnerLoss expected, const char* method) {
  if (attack.inner_loss != expected) {
    throw InvalidArgument(std::string(method) + ": attack uses the wrong inner loss");
  }
}

}  // namespace

LossResult at_loss(const DenseNet& net, const Vector& x, int label, const AttackConfig& attack, Rng& rng) {
  require_inner(attack, InnerLoss::kCrossEntropy, "at_loss");
  const Vector adv = pgd(net, x, label, attack, rng);
  const int labels[] = {label};
  return at_objective(net, Matrix(adv), labels);
}

LossResult trades_loss(const DenseNet& net, const Vector& x, int label, double beta, const AttackConfig& attack,
                       Rng& rng) {
  require_inner(attack, InnerLoss::kKlFromClean, "trades_loss");
  const Vector adv = pgd(net, x, label, attack, rng);
  const int labels[] = {label};
  return trades_objective(net, Matrix(x), Matrix(adv), labels, beta);
}

LossResult bat_loss(const DenseNet& net, const Vector& x, int label, double beta, int m,
                    const AttackConfig& attack, Rng& rng) {
  if (m < 1) throw InvalidArgument("bat: bridge count m must be >= 1");
  require_inner(attack, InnerLoss::kCrossEntropy, "bat_loss");
  const Vector adv = pgd(net, x, label, attack, rng);
  const int labels[] = {label};
  return bat_objective(net, Matrix(x), Matrix(adv), labels, beta, m);
}

}  // namespace bat
