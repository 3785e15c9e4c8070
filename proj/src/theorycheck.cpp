#include "bat/theorycheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "bat/errors.hpp"
#include "bat/losses.hpp"

namespace bat {

std::vector<ParamGradients> probability_jacobian(const DenseNet& net, const Vector& x) {
  const ForwardTrace trace = forward(net, x);
  const ProbVector p = softmax(trace.logits().col(0));
  std::vector<ParamGradients> out;
  out.reserve(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    // dp_i/dz = p_i (e_i - p). The diagonal entry 1 - p_i is summed from the
    // other classes; subtracting from 1 cancels to zero when p is one-hot.
    Vector dz = -p[i] * p;
    double others = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      if (j != i) others += p[j];
    }
    dz[i] = p[i] * others;
    out.push_back(backward_params(net, trace, Matrix(dz)));
  }
  return out;
}

ParamGradients kl_param_gradient(const DenseNet& net, const Vector& x, const Vector& x_star) {
  const ForwardTrace clean = forward(net, x);
  const ForwardTrace adv = forward(net, x_star);
  const KlLogitGradient g = kl_grad_logits(clean.logits().col(0), adv.logits().col(0));
  ParamGradients out = backward_params(net, clean, Matrix(g.wrt_first));
  out += backward_params(net, adv, Matrix(g.wrt_second));
  return out;
}

IdentityReport check_gradient_identity(const DenseNet& net, const Vector& x, const Vector& x_star, double tol) {
  const ParamGradients analytic = kl_param_gradient(net, x, x_star);

  const Vector log_p = log_softmax(logits(net, x));
  const Vector log_p_star = log_softmax(logits(net, x_star));
  const Vector log_alpha = log_p - log_p_star;
  const Vector alpha = log_alpha.array().exp();
  const auto jac = probability_jacobian(net, x);
  const auto jac_star = probability_jacobian(net, x_star);

  ParamGradients assembled = ParamSet::zeros_like(net.params);
  double term_scale = 0.0;
  for (std::size_t i = 0; i < jac.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    assembled.axpy(log_alpha[k], jac[i]);
    assembled.axpy(-alpha[k], jac_star[i]);
    term_scale = std::max({term_scale, std::abs(log_alpha[k]) * jac[i].flatten().lpNorm<Eigen::Infinity>(),
                           alpha[k] * jac_star[i].flatten().lpNorm<Eigen::Infinity>()});
  }

  const Vector a = analytic.flatten();
  const Vector b = assembled.flatten();
  const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), term_scale});
  const double dev = scale > 0.0 ? (a - b).lpNorm<Eigen::Infinity>() / scale : 0.0;
  return {dev < tol, dev};
}

BinaryScoreModel::BinaryScoreModel(DenseNet n) : net(std::move(n)) {
  validate(net);
  if (net.output_dim() != 1) throw InvalidArgument("binary score model needs a single output");
}

double BinaryScoreModel::score(const Vector& x) const { return logits(net, x)[0]; }

ProbVector BinaryScoreModel::prob(const Vector& x) const {
  const double s = sigmoid(score(x));
  ProbVector p(2);
  p << s, 1.0 - s;
  return p;
}

KlChainReport check_kl_chain(std::span<const ProbVector> path, bool monotone) {
  if (path.size() < 2) throw InvalidArgument("kl chain: need at least two points");
  for (const auto& p : path) {
    if (p.size() != 2) throw InvalidArgument("kl chain: distributions must be binary");
    check_prob_vector(p);
  }
  if (monotone) {
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      if (path[k + 1][0] > path[k][0]) throw InvalidArgument("kl chain: path flagged monotone is not");
    }
  }
  KlChainReport r;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) r.chain_sum += kl_div(path[k], path[k + 1]);
  r.direct = kl_div(path.front(), path.back());
  r.exempt = !monotone;
  r.passed = r.exempt || r.chain_sum <= r.direct + 1e-10;
  return r;
}

std::vector<ProbVector> monotone_path_sampler(std::uint64_t seed, int m) {
  if (m < 1) throw InvalidArgument("path sampler: m must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> firsts;
  while (static_cast<int>(firsts.size()) < m + 1) {
    const double v = unit(rng);
    if (v <= 0.0 || v >= 1.0) continue;
    if (std::find(firsts.begin(), firsts.end(), v) != firsts.end()) continue;
    firsts.push_back(v);
  }
  std::sort(firsts.begin(), firsts.end(), std::greater<>());
  std::vector<ProbVector> out;
  for (double v : firsts) {
    ProbVector p(2);
    p << v, 1.0 - v;
    out.push_back(std::move(p));
  }
  return out;
}

IndicatorChainReport check_indicator_chain(const BinaryScoreModel& model, const Vector& x, const Vector& x_star,
                                           int m, double beta) {
  if (m < 1) throw InvalidArgument("indicator chain: m must be >= 1");
  if (!(beta > 0.0)) throw InvalidArgument("indicator chain: beta must be positive");
  const BridgePath path{x, x_star, m};
  std::vector<double> scores;
  for (int k = 0; k <= m; ++k) scores.push_back(model.score(path_point(path, static_cast<double>(k) / m)));
  IndicatorChainReport r;
  r.lhs = beta * scores.front() * scores.back() < 0.0 ? 1 : 0;
  for (int k = 0; k < m; ++k) r.rhs += beta * scores[k] * scores[k + 1] < 0.0 ? 1 : 0;
  r.passed = r.lhs <= r.rhs;
  return r;
}

nlohmann::json CheckResult::to_json() const {
  return {{"check", name}, {"passed", passed}, {"seconds", seconds}, {"detail", detail}};
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Network with random dims up to `max_dims` and nonzero biases.
DenseNet random_net(std::mt19937_64& rng, int max_in, int max_hidden, int min_out, int max_out) {
  std::uniform_int_distribution<int> in_dim(1, max_in);
  std::uniform_int_distribution<int> hidden(1, max_hidden);
  std::uniform_int_distribution<int> out_dim(min_out, max_out);
  const int dims[] = {in_dim(rng), hidden(rng), out_dim(rng)};
  DenseNet net = init_dense_net(dims, rng());
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  for (auto& b : net.params.biases) {
    for (auto& v : b) v = bias(rng);
  }
  return net;
}

Vector random_point(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector x(d);
  for (auto& v : x) v = unit(rng);
  return x;
}

}  // namespace

CheckResult run_gradient_identity_suite(int trials, std::uint64_t seed, double tol) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  int failures = 0;
  int stress = 0;
  for (int i = 0; i < trials; ++i) {
    DenseNet net = random_net(rng, 4, 6, 2, 3);
    // Every fourth trial scales the output layer up so p is close to one-hot.
    if (i % 4 == 3) {
      net.params.weights.back() *= 40.0;
      net.params.biases.back() *= 40.0;
      ++stress;
    }
    const Vector x = random_point(rng, net.input_dim());
    const Vector x_star = random_point(rng, net.input_dim());
    const IdentityReport r = check_gradient_identity(net, x, x_star, tol);
    worst = std::max(worst, r.max_rel_deviation);
    if (!r.passed) ++failures;
  }
  CheckResult out;
  out.name = "gradient_identity";
  out.passed = failures == 0;
  out.seconds = seconds_since(start);
  out.detail = {{"trials", trials}, {"near_one_hot_trials", stress}, {"failures", failures},
                {"max_rel_deviation", worst}, {"tolerance", tol}};
  return out;
}

CheckResult run_kl_chain_suite(int trials, std::uint64_t seed, std::span<const int> bridge_counts) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  long violations = 0;
  long checked = 0;
  long m1_inexact = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
  double max_slack = 0.0;
  for (int i = 0; i < trials; ++i) {
    for (int m : bridge_counts) {
      const auto path = monotone_path_sampler(rng(), m);
      const KlChainReport r = check_kl_chain(path, true);
      ++checked;
      if (!r.passed) ++violations;
      if (m == 1 && r.chain_sum != r.direct) ++m1_inexact;
      max_excess = std::max(max_excess, r.chain_sum - r.direct);
      max_slack = std::max(max_slack, r.direct - r.chain_sum);
    }
  }
  CheckResult out;
  out.name = "kl_chain";
  out.passed = violations == 0 && m1_inexact == 0;
  out.seconds = seconds_since(start);
  out.detail = {{"paths", checked},        {"violations", violations}, {"m1_inexact", m1_inexact},
                {"max_excess", max_excess}, {"max_slack", max_slack},   {"bridge_counts", bridge_counts}};
  return out;
}

CheckResult run_indicator_chain_suite(int trials, std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> bridges(1, 8);
  std::uniform_real_distribution<double> beta(0.1, 10.0);
  int violations = 0;
  int strict = 0;
  for (int i = 0; i < trials; ++i) {
    DenseNet net = random_net(rng, 4, 16, 1, 1);
    const Vector x = random_point(rng, net.input_dim());
    const Vector x_star = random_point(rng, net.input_dim());
    // put a near-zero of f on the segment
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double offset = std::uniform_real_distribution<double>(0.01, 0.05)(rng);
    if (rng() % 2 == 0) offset = -offset;
    net.params.biases.back()[0] += offset - logits(net, path_point(BridgePath{x, x_star, 1}, u))[0];
    const BinaryScoreModel model(net);
    const IndicatorChainReport r = check_indicator_chain(model, x, x_star, bridges(rng), beta(rng));
    if (!r.passed) ++violations;
    if (r.lhs < r.rhs) ++strict;
  }
  CheckResult out;
  out.name = "indicator_chain";
  out.passed = violations == 0 && strict > 0;
  out.seconds = seconds_since(start);
  out.detail = {{"instances", trials}, {"violations", violations}, {"strict_slack_instances", strict}};
  return out;
}

CheckResult run_network_kl_chain_suite(int trials, std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  const int bridge_counts[] = {1, 2, 4, 8};
  long monotone = 0;
  long violations = 0;
  long counterexamples = 0;
  for (int i = 0; i < trials; ++i) {
    const BinaryScoreModel model(random_net(rng, 4, 8, 1, 1));
    const Vector x = random_point(rng, model.net.input_dim());
    const Vector x_star = random_point(rng, model.net.input_dim());
    for (int m : bridge_counts) {
      std::vector<ProbVector> path;
      const BridgePath bridge{x, x_star, m};
      for (int k = 0; k <= m; ++k) path.push_back(model.prob(path_point(bridge, static_cast<double>(k) / m)));
      bool is_monotone = true;
      for (int k = 0; k < m; ++k) is_monotone = is_monotone && path[k + 1][0] <= path[k][0];
      const KlChainReport r = check_kl_chain(path, is_monotone);
      if (is_monotone) {
        ++monotone;
        if (!r.passed) ++violations;
      } else if (r.chain_sum > r.direct + 1e-10) {
        ++counterexamples;
      }
    }
  }
  CheckResult out;
  out.name = "network_kl_chain";
  out.passed = violations == 0 && monotone > 0;
  out.seconds = seconds_since(start);
  out.detail = {{"instances", trials},
                {"monotone_paths", monotone},
                {"violations", violations},
                {"non_monotone_counterexamples", counterexamples}};
  return out;
}

std::vector<CheckResult> run_all_checks(int trials, std::uint64_t seed) {
  const int bridge_counts[] = {1, 2, 4, 8, 16};
  std::vector<CheckResult> out;
  out.push_back(run_gradient_identity_suite(trials, seed));
  out.push_back(run_kl_chain_suite(100 * trials, seed + 1, bridge_counts));
  out.push_back(run_indicator_chain_suite(10 * trials, seed + 2));
  out.push_back(run_network_kl_chain_suite(10 * trials, seed + 3));
  return out;
}

}  // namespace bat
