#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bat/model.hpp"
#include "json.hpp"

namespace bat {

/// Gradient of every class probability with respect to the parameters,
/// evaluated at x. Entry i is grad_theta p_i(x).
std::vector<ParamGradients> probability_jacobian(const DenseNet& net, const Vector& x);

/// Analytic grad_theta KL(p(x) || p(x_star)) computed through the logits.
ParamGradients kl_param_gradient(const DenseNet& net, const Vector& x, const Vector& x_star);

struct IdentityReport {
  bool passed = false;
  double max_rel_deviation = 0.0;
};

/// Compares the analytic KL gradient with the two-term assembly
/// (grad p)^T log(alpha) - (grad p*)^T alpha, alpha = p / p*, built from
/// per-class probability Jacobians. The deviation is measured relative to the
/// largest of the two sides and of the individual summands.
IdentityReport check_gradient_identity(const DenseNet& net, const Vector& x, const Vector& x_star, double tol);

/// Scalar-output network read as a binary classifier: prediction sign(f(x)),
/// probabilities (sigmoid(f), 1 - sigmoid(f)).
struct BinaryScoreModel {
  DenseNet net;

  explicit BinaryScoreModel(DenseNet n);
  double score(const Vector& x) const;
  ProbVector prob(const Vector& x) const;
};

struct KlChainReport {
  bool passed = false;
  bool exempt = false;  // non-monotone paths are not required to satisfy the bound
  double chain_sum = 0.0;
  double direct = 0.0;
};

/// sum_k KL(p_k || p_{k+1}) against KL(p_0 || p_m) for a path of binary
/// distributions. With `monotone` set the first components must be
/// nonincreasing and the chain must not exceed the direct KL by more than 1e-10.
KlChainReport check_kl_chain(std::span<const ProbVector> path, bool monotone);

/// m + 1 binary distributions whose first components are strictly decreasing
/// in (0, 1).
std::vector<ProbVector> monotone_path_sampler(std::uint64_t seed, int m);

struct IndicatorChainReport {
  bool passed = false;
  int lhs = 0;  // 1{beta f(x*) f(x) < 0}
  int rhs = 0;  // number of sign flips between consecutive path samples
};

IndicatorChainReport check_indicator_chain(const BinaryScoreModel& model, const Vector& x, const Vector& x_star,
                                           int m, double beta);

/// One line of the verification report.
struct CheckResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  nlohmann::json detail = nlohmann::json::object();

  nlohmann::json to_json() const;
};

CheckResult run_gradient_identity_suite(int trials, std::uint64_t seed, double tol = 1e-8);
CheckResult run_kl_chain_suite(int trials, std::uint64_t seed, std::span<const int> bridge_counts);
CheckResult run_indicator_chain_suite(int trials, std::uint64_t seed);
/// Binary score networks along linear paths: whenever the sampled first
/// components are monotone the bridged KL must not exceed the direct KL.
CheckResult run_network_kl_chain_suite(int trials, std::uint64_t seed);

/// Every suite above with default sizes scaled by `trials` where it applies.
std::vector<CheckResult> run_all_checks(int trials, std::uint64_t seed);

}  // namespace bat
