#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bat/numerics.hpp"

namespace bat {

/// Weights and biases of a dense network, layer by layer. Layer l maps
/// dims[l] -> dims[l+1], so weights[l] is dims[l+1] x dims[l].
///
/// The same container holds parameter gradients and optimizer moments.
struct ParamSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamSet zeros_like(const ParamSet& other);

  Eigen::Index size() const;
  bool same_shape(const ParamSet& other) const;
  bool all_finite() const;

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator-=(const ParamSet& other);
  ParamSet& operator*=(double s);
  /// this += a * x
  ParamSet& axpy(double a, const ParamSet& x);

  double dot(const ParamSet& other) const;
  double squared_norm() const;
  double norm() const;
  /// Weights (row-major per layer) then biases, layer by layer.
  Vector flatten() const;
  void assign_flat(const Vector& flat);
};

ParamSet operator+(ParamSet a, const ParamSet& b);
ParamSet operator-(ParamSet a, const ParamSet& b);
ParamSet operator*(double s, ParamSet a);

using ParamGradients = ParamSet;

/// Fully connected ReLU classifier: ReLU on every hidden layer, identity on
/// the output layer.
struct DenseNet {
  std::vector<int> layer_dims;
  ParamSet params;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
};

/// Weights ~ U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) from a mt19937_64 seeded
/// with `seed`; biases start at zero.
DenseNet init_dense_net(std::span<const int> layer_dims, std::uint64_t seed);

/// Throws unless weight shapes match layer_dims and every parameter is finite.
void validate(const DenseNet& net);

/// Activations of a batch, one example per column. activations[0] is the
/// input; activations[l + 1] = relu(pre_activations[l]) for hidden layers.
/// The last pre-activation holds the logits.
struct ForwardTrace {
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;

  const Matrix& logits() const { return pre_activations.back(); }
  Eigen::Index batch_size() const { return activations.front().cols(); }
};

ForwardTrace forward(const DenseNet& net, const Matrix& inputs);
ForwardTrace forward(const DenseNet& net, const Vector& x);

/// Logits only, one column per example.
Matrix logits(const DenseNet& net, const Matrix& inputs);
Vector logits(const DenseNet& net, const Vector& x);

/// Parameter gradient of sum_j L_j where column j of `dlogits` is dL_j/dlogits.
ParamGradients backward_params(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits);

/// Input gradient, one column per example.
Matrix input_gradient(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits);

/// Single-example convenience: runs forward and returns dL/dx.
Vector input_gradient(const DenseNet& net, const Vector& x, const Vector& dlogits);

}  // namespace bat
