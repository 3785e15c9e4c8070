#include "bat/attack.hpp"

#include <limits>
#include <string>

#include "bat/errors.hpp"

namespace bat {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw InvalidArgument("attack: epsilon must be >= 0");
  if (steps < 0) throw InvalidArgument("attack: steps must be >= 0");
  if (steps > 0 && !(step_size > 0.0)) throw InvalidArgument("attack: step_size must be > 0 when steps > 0");
  if (restarts < 1) throw InvalidArgument("attack: restarts must be >= 1");
}

Vector project(const PerturbationBall& ball, const Vector& x) {
  if (x.size() != ball.center.size()) throw DimensionMismatch("project: dimension mismatch");
  return project(Matrix(ball.center), ball.epsilon, Matrix(x)).col(0);
}

Matrix project(const Matrix& center, double epsilon, const Matrix& x) {
  if (x.rows() != center.rows() || x.cols() != center.cols()) {
    throw DimensionMismatch("project: shape mismatch");
  }
  return x.array().max(center.array() - epsilon).min(center.array() + epsilon).max(0.0).min(1.0).matrix();
}

namespace {

void check_labels(const Matrix& clean, std::span<const int> labels, int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != clean.cols()) {
    throw DimensionMismatch("attack: label count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidArgument("attack: label out of range");
  }
}

// dL_inner/dlogits at the current iterate, one column per example.
Matrix inner_dlogits(const Matrix& adv_logits, const Matrix& clean_logits, std::span<const int> labels,
                     InnerLoss kind) {
  Matrix out(adv_logits.rows(), adv_logits.cols());
  for (Eigen::Index j = 0; j < adv_logits.cols(); ++j) {
    if (kind == InnerLoss::kCrossEntropy) {
      out.col(j) = cross_entropy_grad_logits(labels[j], adv_logits.col(j));
    } else {
      out.col(j) = kl_grad_logits(clean_logits.col(j), adv_logits.col(j)).wrt_second;
    }
  }
  return out;
}

Vector inner_values(const Matrix& adv_logits, const Matrix& clean_logits, std::span<const int> labels,
                    InnerLoss kind) {
  Vector out(adv_logits.cols());
  for (Eigen::Index j = 0; j < adv_logits.cols(); ++j) {
    out[j] = kind == InnerLoss::kCrossEntropy ? cross_entropy_logits(labels[j], adv_logits.col(j))
                                              : kl_div_logits(clean_logits.col(j), adv_logits.col(j));
  }
  return out;
}

}  // namespace

Vector inner_losses(const DenseNet& net, const Matrix& clean, const Matrix& adv, std::span<const int> labels,
                    InnerLoss kind) {
  check_labels(adv, labels, net.output_dim());
  const Matrix clean_logits = kind == InnerLoss::kKlFromClean ? logits(net, clean) : Matrix();
  return inner_values(logits(net, adv), clean_logits, labels, kind);
}

Matrix pgd(const DenseNet& net, const Matrix& clean, std::span<const int> labels, const AttackConfig& cfg,
           Rng& rng) {
  cfg.validate();
  if (clean.rows() != net.input_dim()) throw DimensionMismatch("pgd: input dimension mismatch");
  check_labels(clean, labels, net.output_dim());

  const Matrix clean_logits = cfg.inner_loss == InnerLoss::kKlFromClean ? logits(net, clean) : Matrix();
  const bool single_pass = cfg.restarts == 1;

  Matrix best = clean;
  Vector best_loss = Vector::Constant(clean.cols(), -std::numeric_limits<double>::infinity());

  for (int r = 0; r < cfg.restarts; ++r) {
    Matrix iterate = clean;
    if (cfg.random_start && cfg.epsilon > 0.0) {
      std::uniform_real_distribution<double> noise(-cfg.epsilon, cfg.epsilon);
      for (Eigen::Index j = 0; j < iterate.cols(); ++j) {
        for (Eigen::Index i = 0; i < iterate.rows(); ++i) iterate(i, j) += noise(rng);
      }
      iterate = project(clean, cfg.epsilon, iterate);
    }
    for (int s = 0; s < cfg.steps; ++s) {
      const ForwardTrace trace = forward(net, iterate);
      const Matrix dlogits = inner_dlogits(trace.logits(), clean_logits, labels, cfg.inner_loss);
      const Matrix grad = input_gradient(net, trace, dlogits);
      iterate = project(clean, cfg.epsilon, iterate + cfg.step_size * grad.array().sign().matrix());
    }
    if (single_pass) return iterate;

    const Vector loss = inner_values(logits(net, iterate), clean_logits, labels, cfg.inner_loss);
    for (Eigen::Index j = 0; j < clean.cols(); ++j) {
      if (loss[j] > best_loss[j]) {
        best_loss[j] = loss[j];
        best.col(j) = iterate.col(j);
      }
    }
  }
  return best;
}

Vector pgd(const DenseNet& net, const Vector& x, int label, const AttackConfig& cfg, Rng& rng) {
  const int labels[] = {label};
  return pgd(net, Matrix(x), labels, cfg, rng).col(0);
}

Vector fgsm(const DenseNet& net, const Vector& x, int label, double epsilon) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.steps = 1;
  cfg.step_size = epsilon;
  cfg.random_start = false;
  cfg.inner_loss = InnerLoss::kCrossEntropy;
  if (epsilon == 0.0) return x;
  Rng unused(0);
  return pgd(net, x, label, cfg, unused);
}

}  // namespace bat
