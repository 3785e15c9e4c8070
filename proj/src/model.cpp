#include "bat/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bat/errors.hpp"

namespace bat {

ParamSet ParamSet::zeros_like(const ParamSet& other) {
  ParamSet out;
  for (const auto& w : other.weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : other.biases) out.biases.push_back(Vector::Zero(b.size()));
  return out;
}

Eigen::Index ParamSet::size() const {
  Eigen::Index n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols()) {
      return false;
    }
  }
  for (std::size_t l = 0; l < biases.size(); ++l) {
    if (biases[l].size() != other.biases[l].size()) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

namespace {

void require_congruent(const ParamSet& a, const ParamSet& b) {
  if (!a.same_shape(b)) throw DimensionMismatch("parameter sets have different shapes");
}

}  // namespace

ParamSet& ParamSet::operator+=(const ParamSet& other) { return axpy(1.0, other); }

ParamSet& ParamSet::operator-=(const ParamSet& other) { return axpy(-1.0, other); }

ParamSet& ParamSet::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

ParamSet& ParamSet::axpy(double a, const ParamSet& x) {
  require_congruent(*this, x);
  for (std::size_t l = 0; l < weights.size(); ++l) weights[l] += a * x.weights[l];
  for (std::size_t l = 0; l < biases.size(); ++l) biases[l] += a * x.biases[l];
  return *this;
}

double ParamSet::dot(const ParamSet& other) const {
  require_congruent(*this, other);
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].cwiseProduct(other.weights[l]).sum();
  for (std::size_t l = 0; l < biases.size(); ++l) total += biases[l].dot(other.biases[l]);
  return total;
}

double ParamSet::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weights) total += w.squaredNorm();
  for (const auto& b : biases) total += b.squaredNorm();
  return total;
}

double ParamSet::norm() const { return std::sqrt(squared_norm()); }

Vector ParamSet::flatten() const {
  Vector out(size());
  Eigen::Index k = 0;
  for (const auto& w : weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out[k++] = w(r, c);
    }
  }
  for (const auto& b : biases) {
    out.segment(k, b.size()) = b;
    k += b.size();
  }
  return out;
}

void ParamSet::assign_flat(const Vector& flat) {
  if (flat.size() != size()) throw DimensionMismatch("assign_flat: wrong parameter count");
  Eigen::Index k = 0;
  for (auto& w : weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
    }
  }
  for (auto& b : biases) {
    b = flat.segment(k, b.size());
    k += b.size();
  }
}

ParamSet operator+(ParamSet a, const ParamSet& b) { return a += b; }
ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
ParamSet operator*(double s, ParamSet a) { return a *= s; }

DenseNet init_dense_net(std::span<const int> layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw InvalidArgument("init: need at least input and output dims");
  for (int d : layer_dims) {
    if (d < 1) throw InvalidArgument("init: every layer dim must be >= 1");
  }
  DenseNet net;
  net.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    net.params.weights.push_back(std::move(w));
    net.params.biases.push_back(Vector::Zero(fan_out));
  }
  return net;
}

void validate(const DenseNet& net) {
  if (net.layer_dims.size() < 2) throw InvalidArgument("network needs at least two layer dims");
  const auto layers = static_cast<std::size_t>(net.num_layers());
  if (net.params.weights.size() != layers || net.params.biases.size() != layers) {
    throw DimensionMismatch("network parameter count does not match layer dims");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = net.params.weights[l];
    if (w.rows() != net.layer_dims[l + 1] || w.cols() != net.layer_dims[l] ||
        net.params.biases[l].size() != net.layer_dims[l + 1]) {
      throw DimensionMismatch("layer " + std::to_string(l) + " has inconsistent shape");
    }
  }
  if (!net.params.all_finite()) throw InvalidArgument("network has non-finite parameters");
}

ForwardTrace forward(const DenseNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw DimensionMismatch("forward: input has " + std::to_string(inputs.rows()) + " features, network expects " +
                            std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  const int layers = net.num_layers();
  trace.pre_activations.reserve(layers);
  trace.activations.reserve(layers);
  trace.activations.push_back(inputs);
  for (int l = 0; l < layers; ++l) {
    Matrix z = net.params.weights[l] * trace.activations.back();
    z.colwise() += net.params.biases[l];
    if (l + 1 < layers) trace.activations.push_back(z.cwiseMax(0.0));
    trace.pre_activations.push_back(std::move(z));
  }
  return trace;
}

ForwardTrace forward(const DenseNet& net, const Vector& x) { return forward(net, Matrix(x)); }

Matrix logits(const DenseNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.input_dim()) throw DimensionMismatch("logits: input dimension mismatch");
  Matrix a = inputs;
  const int layers = net.num_layers();
  for (int l = 0; l < layers; ++l) {
    Matrix z = net.params.weights[l] * a;
    z.colwise() += net.params.biases[l];
    a = (l + 1 < layers) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

Vector logits(const DenseNet& net, const Vector& x) { return logits(net, Matrix(x)).col(0); }

namespace {

void check_dlogits(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits) {
  if (static_cast<int>(trace.pre_activations.size()) != net.num_layers()) {
    throw DimensionMismatch("trace depth does not match network");
  }
  if (dlogits.rows() != net.output_dim() || dlogits.cols() != trace.batch_size()) {
    throw DimensionMismatch("dL/dlogits shape does not match trace");
  }
}

// Walks the layers backwards. Writes parameter gradients when `grads` is
// non-null and returns dL/dinputs when `want_inputs` is set.
Matrix backprop(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits, ParamGradients* grads,
                bool want_inputs) {
  check_dlogits(net, trace, dlogits);
  Matrix delta = dlogits;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    if (grads != nullptr) {
      grads->weights[l].noalias() = delta * trace.activations[l].transpose();
      grads->biases[l] = delta.rowwise().sum();
    }
    if (l == 0 && !want_inputs) break;
    Matrix upstream = net.params.weights[l].transpose() * delta;
    if (l > 0) {
      // ReLU subgradient at zero is zero.
      upstream.array() *= (trace.pre_activations[l - 1].array() > 0.0).cast<double>();
    }
    delta = std::move(upstream);
  }
  return want_inputs ? delta : Matrix();
}

}  // namespace

ParamGradients backward_params(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits) {
  ParamGradients grads = ParamSet::zeros_like(net.params);
  backprop(net, trace, dlogits, &grads, false);
  return grads;
}

Matrix input_gradient(const DenseNet& net, const ForwardTrace& trace, const Matrix& dlogits) {
  return backprop(net, trace, dlogits, nullptr, true);
}

Vector input_gradient(const DenseNet& net, const Vector& x, const Vector& dlogits) {
  const ForwardTrace trace = forward(net, x);
  return input_gradient(net, trace, Matrix(dlogits)).col(0);
}

}  // namespace bat
