#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "bat/attack.hpp"
#include "bat/errors.hpp"
#include "bat/numerics.hpp"
#include "test_support.hpp"

using namespace bat;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

// 1 input, 2 classes, CE for label 0 increasing in x.
DenseNet increasing_line() {
  DenseNet net = init_dense_net(std::vector<int>{1, 2}, 0);
  net.params.weights[0] << -1.0, 1.0;
  net.params.biases[0].setZero();
  return net;
}

bool feasible(const Vector& center, double eps, const Vector& x) {
  return (x - center).lpNorm<Eigen::Infinity>() <= eps + 1e-9 && x.minCoeff() >= 0.0 && x.maxCoeff() <= 1.0;
}

AttackConfig cfg(double eps, int steps, double eta, int restarts = 1, bool random_start = false,
                 InnerLoss kind = InnerLoss::kCrossEntropy) {
  AttackConfig c;
  c.epsilon = eps;
  c.steps = steps;
  c.step_size = eta;
  c.restarts = restarts;
  c.random_start = random_start;
  c.inner_loss = kind;
  return c;
}

}  // namespace

TEST_CASE("project examples") {
  CHECK(project(PerturbationBall{vec({0.5}), 0.1}, vec({0.75}))[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(project(PerturbationBall{vec({0.05}), 0.1}, vec({-0.02}))[0] == 0.0);
  const Vector inside = vec({0.52, 0.47});
  CHECK(project(PerturbationBall{vec({0.5, 0.5}), 0.1}, inside) == inside);
  CHECK(project(PerturbationBall{vec({0.98}), 0.1}, vec({1.3}))[0] == 1.0);
  CHECK_THROWS_AS(project(PerturbationBall{vec({0.5}), 0.1}, vec({0.5, 0.5})), DimensionMismatch);
}

TEST_CASE("project is idempotent and feasible") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector c = testing::random_point(rng, 5);
    const double eps = 0.3 * testing::random_point(rng, 1)[0];
    const Vector x = testing::random_point(rng, 5, -0.5, 1.5);
    const Vector once = project(PerturbationBall{c, eps}, x);
    CHECK(feasible(c, eps, once));
    CHECK(project(PerturbationBall{c, eps}, once) == once);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(cfg(-0.1, 1, 0.1).validate(), InvalidArgument);
  CHECK_THROWS_AS(cfg(0.1, 1, 0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(cfg(0.1, 1, 0.1, 0).validate(), InvalidArgument);
  CHECK_THROWS_AS(cfg(0.1, -1, 0.1).validate(), InvalidArgument);
  CHECK_NOTHROW(cfg(0.1, 0, 0.0).validate());
}

TEST_CASE("zero steps without random start returns x") {
  std::mt19937_64 gen(1);
  const DenseNet net = testing::random_net(gen, {3, 4, 2});
  Rng rng(5);
  const Vector x = vec({0.2, 0.4, 0.6});
  CHECK(pgd(net, x, 1, cfg(0.3, 0, 0.0), rng) == x);
}

TEST_CASE("sign ascent saturates the ball") {
  const DenseNet net = increasing_line();
  Rng rng(0);
  CHECK(pgd(net, vec({0.3}), 0, cfg(0.1, 3, 0.05), rng)[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(pgd(net, vec({0.95}), 0, cfg(0.1, 3, 0.05), rng)[0] == 1.0);
  CHECK(fgsm(net, vec({0.3}), 0, 0.1)[0] == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("fgsm with zero input gradient leaves x unchanged") {
  DenseNet net = init_dense_net(std::vector<int>{2, 3}, 0);
  net.params.weights[0].setZero();
  const Vector x = vec({0.3, 0.6});
  CHECK(fgsm(net, x, 1, 0.2) == x);
}

TEST_CASE("fgsm equals one full-epsilon pgd step") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseNet net = testing::random_net(gen, {4, 6, 3});
    const Vector x = testing::random_point(gen, 4);
    const int y = trial % 3;
    Rng rng(trial);
    CHECK(fgsm(net, x, y, 0.15) == pgd(net, x, y, cfg(0.15, 1, 0.15), rng));
  }
}

TEST_CASE("generated examples are feasible and deterministic") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseNet net = testing::random_net(gen, {5, 8, 4});
    const Vector x = testing::random_point(gen, 5);
    const double eps = 0.05 + 0.3 * testing::random_point(gen, 1)[0];
    const InnerLoss kind = trial % 2 ? InnerLoss::kKlFromClean : InnerLoss::kCrossEntropy;
    const AttackConfig c = cfg(eps, 7, eps / 3.0, 3, true, kind);
    Rng a(trial), b(trial);
    const Vector xa = pgd(net, x, trial % 4, c, a);
    const Vector xb = pgd(net, x, trial % 4, c, b);
    CHECK(feasible(x, eps, xa));
    CHECK(xa == xb);
  }
}

TEST_CASE("restarts return the best final iterate") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 30; ++trial) {
    const DenseNet net = testing::random_net(gen, {4, 8, 3});
    const Matrix x = testing::random_point(gen, 4);
    const std::vector<int> y{trial % 3};
    const AttackConfig multi = cfg(0.2, 3, 0.05, 4, true);
    Rng rng(100 + trial);
    const Matrix best = pgd(net, x, y, multi, rng);
    const double best_loss = inner_losses(net, x, best, y, multi.inner_loss)[0];

    // Replay each restart as an independent single-restart run on the same stream.
    Rng replay(100 + trial);
    const AttackConfig single = cfg(0.2, 3, 0.05, 1, true);
    double max_loss = -1.0;
    for (int r = 0; r < 4; ++r) {
      const Matrix cand = pgd(net, x, y, single, replay);
      max_loss = std::max(max_loss, inner_losses(net, x, cand, y, single.inner_loss)[0]);
    }
    CHECK(best_loss == max_loss);
  }
}

TEST_CASE("inner loss dispatch") {
  std::mt19937_64 gen(2);
  const DenseNet net = testing::random_net(gen, {3, 5, 3});
  const Matrix x = testing::random_point(gen, 3);
  const Matrix adv = testing::random_point(gen, 3);
  const std::vector<int> y{2};
  const Vector zx = logits(net, Vector(x.col(0)));
  const Vector za = logits(net, Vector(adv.col(0)));
  CHECK(inner_losses(net, x, adv, y, InnerLoss::kCrossEntropy)[0] ==
        doctest::Approx(cross_entropy({2, 3}, softmax(za))).epsilon(1e-12));
  CHECK(inner_losses(net, x, adv, y, InnerLoss::kKlFromClean)[0] ==
        doctest::Approx(kl_div(softmax(zx), softmax(za))).epsilon(1e-10));
  CHECK(inner_losses(net, x, x, y, InnerLoss::kKlFromClean)[0] == doctest::Approx(0.0));
}

TEST_CASE("pgd beats brute-force sampling of the ball") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int wins = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const DenseNet net = testing::random_net(gen, {2, 16, 2});
    const Vector x = testing::random_point(gen, 2, 0.1, 0.9);
    const int y = trial % 2;
    Rng rng(trial);
    const Vector adv = pgd(net, x, y, cfg(0.1, 5, 0.05, 10, true), rng);
    const double found = cross_entropy_logits(y, logits(net, adv));

    Matrix samples(2, 10000);
    for (int j = 0; j < samples.cols(); ++j) {
      samples(0, j) = x[0] + 0.1 * u(gen);
      samples(1, j) = x[1] + 0.1 * u(gen);
    }
    const Matrix z = logits(net, samples);
    double best = 0.0;
    for (int j = 0; j < z.cols(); ++j) best = std::max(best, cross_entropy_logits(y, Vector(z.col(j))));
    if (found >= best) ++wins;
  }
  MESSAGE("pgd wins ", wins, " of ", trials);
  CHECK(wins >= 48);
}
