#include "tscore/mlp.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "tscore/errors.hpp"
#include "tscore/kernels.hpp"

namespace tscore {

namespace {

std::atomic<std::uint64_t> next_stamp{1};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation a, double x) { return a == Activation::swish ? swish(x) : x; }
double activate_derivative(Activation a, double x) {
  return a == Activation::swish ? swish_derivative(x) : 1.0;
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::swish ? "swish" : "linear"; }

Activation parse_activation(std::string_view name) {
  if (name == "swish") return Activation::swish;
  if (name == "linear") return Activation::linear;
  throw InvalidInput("unknown activation '" + std::string(name) + "'");
}

double swish(double x) { return x * sigmoid(x); }

double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidInput("MlpNetwork: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0)
      throw InvalidInput("MlpNetwork: empty layer " + std::to_string(i));
    if (l.bias.size() != l.out_dim())
      throw InvalidInput("MlpNetwork: bias size mismatch in layer " + std::to_string(i));
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
      throw InvalidInput("MlpNetwork: layer " + std::to_string(i) + " does not chain");
  }
  touch();
}

MlpNetwork MlpNetwork::glorot(std::span<const std::size_t> widths, Activation hidden,
                              Activation output, std::mt19937_64& rng) {
  if (widths.size() < 2) throw InvalidInput("MlpNetwork::glorot: need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i], fan_out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer l{Matrix(fan_out, fan_in), Vector(fan_out, 0.0),
                 i + 2 == widths.size() ? output : hidden};
    for (double& w : l.weight.values()) w = u(rng);
    layers.push_back(std::move(l));
  }
  return MlpNetwork(std::move(layers));
}

void MlpNetwork::touch() { stamp_ = next_stamp.fetch_add(1, std::memory_order_relaxed); }

std::size_t MlpNetwork::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t MlpNetwork::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Vector MlpNetwork::parameters() const {
  Vector flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void MlpNetwork::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InvalidInput("set_parameters: size mismatch");
  for (double v : flat)
    if (!std::isfinite(v)) throw InvalidInput("set_parameters: non-finite parameter");
  std::size_t at = 0;
  for (auto& l : layers_) {
    for (double& w : l.weight.values()) w = flat[at++];
    for (double& b : l.bias) b = flat[at++];
  }
  touch();
}

ForwardResult MlpNetwork::forward(const Matrix& batch) const {
  if (batch.cols() != in_dim())
    throw InvalidInput("mlp forward: batch has " + std::to_string(batch.cols()) +
                       " columns, network expects " + std::to_string(in_dim()));
  ForwardResult r;
  r.tape.stamp = stamp_;
  Matrix h = batch;
  for (const auto& l : layers_) {
    Matrix a = kernels::gemm(h, false, l.weight, true);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto row = a.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += l.bias[j];
    }
    Matrix next = a;
    if (l.activation != Activation::linear)
      for (double& v : next.values()) v = activate(l.activation, v);
    r.tape.inputs.push_back(std::move(h));
    r.tape.pre_activations.push_back(std::move(a));
    h = std::move(next);
  }
  r.output = std::move(h);
  return r;
}

Matrix MlpNetwork::predict(const Matrix& batch) const { return forward(batch).output; }

Vector MlpNetwork::predict(std::span<const double> x) const {
  Matrix out = predict(Matrix::from_row(x));
  return Vector(out.values().begin(), out.values().end());
}

BackwardResult MlpNetwork::backward(const ForwardTape& tape, const Matrix& upstream) const {
  if (tape.stamp != stamp_ || tape.inputs.size() != layers_.size())
    throw ContractViolation("mlp backward: tape does not belong to this network state");
  const std::size_t n = tape.inputs.front().rows();
  if (upstream.rows() != n || upstream.cols() != out_dim())
    throw ContractViolation("mlp backward: upstream gradient shape does not match tape");

  BackwardResult r;
  r.parameter_gradient.assign(parameter_count(), 0.0);
  std::size_t offset = r.parameter_gradient.size();
  Matrix grad = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const Matrix& pre = tape.pre_activations[li];
    if (l.activation != Activation::linear) {
      auto g = grad.values();
      auto a = pre.values();
      for (std::size_t t = 0; t < g.size(); ++t) g[t] *= activate_derivative(l.activation, a[t]);
    }
    const Matrix dw = kernels::gemm(grad, true, tape.inputs[li], false);
    offset -= l.weight.size() + l.bias.size();
    std::copy(dw.values().begin(), dw.values().end(), r.parameter_gradient.begin() + offset);
    double* db = r.parameter_gradient.data() + offset + l.weight.size();
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      auto row = grad.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) db[j] += row[j];
    }
    grad = kernels::gemm(grad, false, l.weight, false);
  }
  r.input_gradient = std::move(grad);
  return r;
}

Matrix MlpNetwork::jacobian(std::span<const double> x) const {
  if (x.size() != in_dim()) throw InvalidInput("mlp jacobian: input dimension mismatch");
  Vector h(x.begin(), x.end());
  Matrix jac = Matrix::identity(in_dim());
  for (const auto& l : layers_) {
    Vector a(l.out_dim());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = dot(l.weight.row(i), h) + l.bias[i];
    Matrix next = matmul(l.weight, jac);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double s = activate_derivative(l.activation, a[i]);
      for (double& v : next.row(i)) v *= s;
      a[i] = activate(l.activation, a[i]);
    }
    jac = std::move(next);
    h = std::move(a);
  }
  return jac;
}

bool operator==(const MlpNetwork& a, const MlpNetwork& b) { return a.layers_ == b.layers_; }

}  // namespace tscore
