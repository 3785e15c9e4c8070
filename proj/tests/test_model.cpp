#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "bat/errors.hpp"
#include "bat/model.hpp"
#include "bat/numerics.hpp"
#include "test_support.hpp"

using namespace bat;

namespace {

// KL(target || softmax(z)) with `target` held fixed.
double kl_to_target(const ProbVector& target, const Vector& z) {
  const Vector lq = log_softmax(z);
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (target[i] > 0.0) s += target[i] * (std::log(target[i]) - lq[i]);
  }
  return s;
}

std::vector<int> random_dims(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d_in(1, 6), d_hidden(1, 8), d_out(2, 5), depth(0, 1);
  std::vector<int> dims{d_in(rng)};
  if (depth(rng) == 1) dims.push_back(d_hidden(rng));
  dims.push_back(d_hidden(rng));
  dims.push_back(d_out(rng));
  return dims;
}

}  // namespace

TEST_CASE("init is seeded and within the fan-in bound") {
  const std::vector<int> dims{4, 7, 3};
  const DenseNet a = init_dense_net(dims, 99);
  const DenseNet b = init_dense_net(dims, 99);
  const DenseNet c = init_dense_net(dims, 100);
  CHECK(a.params.flatten() == b.params.flatten());
  CHECK(a.params.flatten() != c.params.flatten());
  CHECK(a.params.weights[0].rows() == 7);
  CHECK(a.params.weights[0].cols() == 4);
  CHECK(a.params.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 4.0));
  CHECK(a.params.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 7.0));
  CHECK(a.params.biases[1].isZero(0.0));
  CHECK(a.params.size() == 4 * 7 + 7 + 7 * 3 + 3);
  CHECK_THROWS_AS(init_dense_net(std::vector<int>{4}, 1), InvalidArgument);
  CHECK_THROWS_AS(init_dense_net(std::vector<int>{4, 0, 2}, 1), InvalidArgument);
}

TEST_CASE("flatten and assign_flat round trip") {
  std::mt19937_64 rng(1);
  DenseNet net = testing::random_net(rng, {3, 5, 2});
  const Vector flat = net.params.flatten();
  DenseNet other = init_dense_net(std::vector<int>{3, 5, 2}, 0);
  other.params.assign_flat(flat);
  CHECK(other.params.flatten() == flat);
  CHECK(flat[1] == net.params.weights[0](0, 1));
  CHECK_THROWS(other.params.assign_flat(Vector::Zero(3)));
}

TEST_CASE("zero network gives uniform softmax") {
  DenseNet net = init_dense_net(std::vector<int>{3, 4, 5}, 1);
  net.params *= 0.0;
  const Vector z = logits(net, Vector(Vector::Constant(3, 0.7)));
  CHECK(z.isZero(0.0));
  CHECK((softmax(z).array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("single linear layer gives Wx + b") {
  DenseNet net = init_dense_net(std::vector<int>{3, 2}, 4);
  net.params.biases[0] << 0.5, -0.25;
  Vector x(3);
  x << 0.1, 0.2, 0.3;
  const Vector expected = net.params.weights[0] * x + net.params.biases[0];
  CHECK((logits(net, x) - expected).lpNorm<Eigen::Infinity>() < 1e-15);
  net.params.biases[0].setZero();
  CHECK(logits(net, Vector(Vector::Zero(3))).isZero(0.0));

  // loss = logit_1 -> input gradient is row 1 of W
  Vector dl(2);
  dl << 0.0, 1.0;
  CHECK((input_gradient(net, x, dl) - net.params.weights[0].row(1).transpose()).isZero(0.0));
}

TEST_CASE("sum of logits on a linear net") {
  DenseNet net = init_dense_net(std::vector<int>{3, 2}, 4);
  Vector x(3);
  x << 0.1, 0.2, 0.3;
  const ForwardTrace trace = forward(net, x);
  const ParamGradients g = backward_params(net, trace, Matrix::Ones(2, 1));
  for (int r = 0; r < 2; ++r) {
    CHECK((g.weights[0].row(r).transpose() - x).isZero(0.0));
    CHECK(g.biases[0][r] == 1.0);
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  std::mt19937_64 rng(2);
  const DenseNet net = testing::random_net(rng, {4, 6, 3});
  const Vector x = testing::random_point(rng, 4);
  const ForwardTrace trace = forward(net, x);
  CHECK(backward_params(net, trace, Matrix::Zero(3, 1)).squared_norm() == 0.0);
  CHECK(input_gradient(net, x, Vector::Zero(3)).isZero(0.0));
}

TEST_CASE("shape mismatches are rejected") {
  const DenseNet net = init_dense_net(std::vector<int>{4, 6, 3}, 2);
  CHECK_THROWS_AS(logits(net, Vector(Vector::Zero(5))), DimensionMismatch);
  const ForwardTrace trace = forward(net, Vector(Vector::Zero(4)));
  CHECK_THROWS_AS(backward_params(net, trace, Matrix::Zero(2, 1)), DimensionMismatch);
  CHECK_THROWS_AS(input_gradient(net, trace, Matrix::Zero(3, 2)), DimensionMismatch);
}

TEST_CASE("hidden activations are relu of pre-activations") {
  std::mt19937_64 rng(8);
  const DenseNet net = testing::random_net(rng, {5, 8, 6, 3});
  Matrix x(5, 10);
  for (int j = 0; j < 10; ++j) x.col(j) = testing::random_point(rng, 5);
  const ForwardTrace t = forward(net, x);
  REQUIRE(t.activations.size() == 3);
  CHECK(t.activations[0] == x);
  for (int l = 0; l < 2; ++l) {
    CHECK(t.activations[l + 1] == t.pre_activations[l].cwiseMax(0.0));
  }
  // column-batched forward equals per-example forward
  for (int j = 0; j < 10; ++j) {
    CHECK((t.logits().col(j) - logits(net, Vector(x.col(j)))).lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("backprop matches central differences on 100 random nets") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<int> dims = random_dims(rng);
    const DenseNet net = testing::random_net(rng, dims);
    const Vector x = testing::random_point(rng, dims.front());
    const int c = dims.back();
    const int y = static_cast<int>(rng() % c);
    const bool use_ce = trial % 2 == 0;
    const ProbVector target = softmax(testing::random_point(rng, c, -2.0, 2.0));

    auto loss_of_logits = [&](const Vector& z) { return use_ce ? cross_entropy_logits(y, z) : kl_to_target(target, z); };
    const Vector z = logits(net, x);
    const Vector dl = use_ce ? cross_entropy_grad_logits(y, z) : Vector(softmax(z) - target);

    const ForwardTrace trace = forward(net, x);
    const Vector analytic_params = backward_params(net, trace, dl).flatten();
    const Vector fd_params =
        testing::fd_param_gradient(net, [&](const DenseNet& n) { return loss_of_logits(logits(n, x)); });
    CHECK(testing::max_rel_error(analytic_params, fd_params) < 1e-4);

    const Vector analytic_input = input_gradient(net, x, dl);
    const Vector fd_input = testing::fd_input_gradient(x, [&](const Vector& v) { return loss_of_logits(logits(net, v)); });
    CHECK(testing::max_rel_error(analytic_input, fd_input) < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("batched backward sums per-example gradients") {
  std::mt19937_64 rng(5);
  const DenseNet net = testing::random_net(rng, {3, 4, 2});
  Matrix x(3, 4), dl(2, 4);
  for (int j = 0; j < 4; ++j) {
    x.col(j) = testing::random_point(rng, 3);
    dl.col(j) = testing::random_point(rng, 2, -1.0, 1.0);
  }
  const ParamGradients total = backward_params(net, forward(net, x), dl);
  ParamGradients sum = ParamSet::zeros_like(net.params);
  for (int j = 0; j < 4; ++j) {
    const Vector xj = x.col(j);
    sum += backward_params(net, forward(net, xj), Matrix(dl.col(j)));
  }
  CHECK((total.flatten() - sum.flatten()).lpNorm<Eigen::Infinity>() < 1e-14);
}
