#pragma once

// Shared fixtures for the unit tests: random networks and central-difference
// oracles that only ever call the forward pass.

#include <cmath>
#include <functional>
#include <random>

#include "bat/model.hpp"

namespace bat::testing {

inline DenseNet random_net(std::mt19937_64& rng, std::vector<int> dims, double bias_scale = 0.3) {
  DenseNet net = init_dense_net(dims, rng());
  std::uniform_real_distribution<double> bias(-bias_scale, bias_scale);
  for (auto& b : net.params.biases) {
    for (auto& v : b) v = bias(rng);
  }
  return net;
}

inline Vector random_point(std::mt19937_64& rng, int d, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> unit(lo, hi);
  Vector x(d);
  for (auto& v : x) v = unit(rng);
  return x;
}

/// Central differences of `loss` over every parameter of `net`.
inline Vector fd_param_gradient(const DenseNet& net, const std::function<double(const DenseNet&)>& loss,
                                double h = 1e-5) {
  DenseNet probe = net;
  const Vector base = net.params.flatten();
  Vector out(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector plus = base;
    Vector minus = base;
    plus[i] += h;
    minus[i] -= h;
    probe.params.assign_flat(plus);
    const double fp = loss(probe);
    probe.params.assign_flat(minus);
    const double fm = loss(probe);
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

inline Vector fd_input_gradient(const Vector& x, const std::function<double(const Vector&)>& loss, double h = 1e-5) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector plus = x;
    Vector minus = x;
    plus[i] += h;
    minus[i] -= h;
    out[i] = (loss(plus) - loss(minus)) / (2.0 * h);
  }
  return out;
}

/// True when some hidden pre-activation of some column lies within `tol` of
/// the ReLU kink, where central differences are not a valid oracle.
inline bool near_kink(const DenseNet& net, const Matrix& inputs, double tol = 1e-4) {
  const ForwardTrace t = forward(net, inputs);
  for (std::size_t l = 0; l + 1 < t.pre_activations.size(); ++l) {
    if ((t.pre_activations[l].array().abs() < tol).any()) return true;
  }
  return false;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_error(const Vector& a, const Vector& b, double floor = 1e-7) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace bat::testing
