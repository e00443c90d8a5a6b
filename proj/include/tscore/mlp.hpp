#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "tscore/linalg.hpp"

namespace tscore {

enum class Activation { swish, linear };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

double swish(double x);
double swish_derivative(double x);

/// y = act(W x + b) with W stored out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Cached activations of one forward pass. Only valid for the network state
/// that produced it.
struct ForwardTape {
  std::uint64_t stamp = 0;
  std::vector<Matrix> inputs;           // input to each layer
  std::vector<Matrix> pre_activations;  // W x + b of each layer
};

struct ForwardResult {
  Matrix output;
  ForwardTape tape;
};

struct BackwardResult {
  Vector parameter_gradient;  // flat, same order as MlpNetwork::parameters()
  Matrix input_gradient;
};

class MlpNetwork {
 public:
  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. `widths` lists every layer size
  /// from input to output; all layers but the last use `hidden`.
  static MlpNetwork glorot(std::span<const std::size_t> widths, Activation hidden,
                           Activation output, std::mt19937_64& rng);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  std::uint64_t stamp() const { return stamp_; }

  std::size_t parameter_count() const;
  Vector parameters() const;
  void set_parameters(std::span<const double> flat);

  ForwardResult forward(const Matrix& batch) const;
  Matrix predict(const Matrix& batch) const;
  Vector predict(std::span<const double> x) const;

  /// Reverse pass for upstream = dLoss/dOutput. Throws ContractViolation when
  /// the tape came from a different parameter state or batch shape.
  BackwardResult backward(const ForwardTape& tape, const Matrix& upstream) const;

  /// d output / d input at a single point, out_dim x in_dim.
  Matrix jacobian(std::span<const double> x) const;

  friend bool operator==(const MlpNetwork& a, const MlpNetwork& b);

 private:
  void touch();

  std::vector<DenseLayer> layers_;
  std::uint64_t stamp_ = 0;
};

}  // namespace tscore
