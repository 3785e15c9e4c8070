#include "bat/numerics.hpp"

#include <cmath>
#include <string>

#include "bat/errors.hpp"

namespace bat {

namespace {

void require_same_size(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(std::string(what) + ": length " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
  }
}

double floored_log(double v) { return std::log(std::max(v, kProbFloor)); }

}  // namespace

void rebalance_logit_gradient(Vector& g, const ProbVector& p) {
  const int k = argmax(p);
  double others = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (i != k) others += g[i];
  }
  g[k] = -others;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

void check_prob_vector(const ProbVector& p) {
  if (p.size() < 2) throw InvalidArgument("probability vector needs at least 2 entries");
  if (!p.allFinite() || (p.array() < 0.0).any()) {
    throw InvalidArgument("probability vector has negative or non-finite entries");
  }
  if (std::abs(p.sum() - 1.0) > 1e-6) throw InvalidArgument("probability vector does not sum to 1");
}

Vector log_softmax(const LogitVector& z) {
  if (z.size() == 0 || !z.allFinite()) throw InvalidArgument("softmax: logits must be finite");
  const double shift = z.maxCoeff();
  const Vector shifted = z.array() - shift;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

ProbVector softmax(const LogitVector& z) {
  if (z.size() == 0 || !z.allFinite()) throw InvalidArgument("softmax: logits must be finite");
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double kl_div(const ProbVector& p, const ProbVector& q) {
  require_same_size(p, q, "kl_div");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    total += p[i] * (floored_log(p[i]) - floored_log(q[i]));
  }
  // Rounding can leave a tiny negative value when p == q up to the last ulp.
  return std::max(total, 0.0);
}

double kl_div_logits(const LogitVector& zp, const LogitVector& zq) {
  require_same_size(zp, zq, "kl_div_logits");
  const Vector lp = log_softmax(zp);
  const Vector lq = log_softmax(zq);
  double total = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) total += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(total, 0.0);
}

double cross_entropy(const OneHotLabel& y, const ProbVector& p) {
  if (y.dimension != p.size()) throw DimensionMismatch("cross_entropy: label dimension mismatch");
  if (y.class_index < 0 || y.class_index >= y.dimension) {
    throw InvalidArgument("cross_entropy: class index out of range");
  }
  return -floored_log(p[y.class_index]);
}

double cross_entropy_logits(int label, const LogitVector& z) {
  if (label < 0 || label >= z.size()) throw InvalidArgument("cross_entropy: class index out of range");
  return -log_softmax(z)[label];
}

Vector cross_entropy_grad_logits(int label, const LogitVector& z) {
  if (label < 0 || label >= z.size()) throw InvalidArgument("cross_entropy: class index out of range");
  const ProbVector p = softmax(z);
  Vector g = p;
  g[label] -= 1.0;
  rebalance_logit_gradient(g, p);
  return g;
}

KlLogitGradient kl_grad_logits(const LogitVector& zp, const LogitVector& zq) {
  require_same_size(zp, zq, "kl_grad_logits");
  const Vector lp = log_softmax(zp);
  const Vector lq = log_softmax(zq);
  const Vector p = lp.array().exp();
  const Vector q = lq.array().exp();
  // dKL/dzp = J_p^T (log p - log q); dKL/dzq = q - p.
  const Vector v = lp - lq;
  KlLogitGradient g{p.cwiseProduct(v) - p * p.dot(v), q - p};
  rebalance_logit_gradient(g.wrt_first, p);
  rebalance_logit_gradient(g.wrt_second, q);
  return g;
}

Vector log_alpha(const ProbVector& p, const ProbVector& q) {
  require_same_size(p, q, "log_alpha");
  Vector out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = floored_log(p[i]) - floored_log(q[i]);
  return out;
}

int argmax(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

int argmax_excluding(const Vector& v, int skip) {
  int best = -1;
  for (int i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v[i] > v[best]) best = i;
  }
  if (best < 0) throw InvalidArgument("argmax_excluding: need at least two entries");
  return best;
}

}  // namespace bat
