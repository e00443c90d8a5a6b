#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tscore/adam.hpp"
#include "tscore/data.hpp"
#include "tscore/linalg.hpp"
#include "tscore/mlp.hpp"
#include "tscore/priors.hpp"
#include "tscore/random.hpp"

namespace tscore {

struct TrainConfig {
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 3;
  std::size_t latent_dim = 2;
  std::size_t mixture_components = 1;
  PriorKind prior_kind = PriorKind::gaussian_mixture;
  double prior_variance = 1.0;       // Gaussian components
  double prior_concentration = 10.0; // vMF components
  double kernel_width = 1.0;         // IMQ c
  double beta = 1.0;
  std::size_t batch_size = 100;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;
  AdamOptions adam;

  /// Variance for Gaussian priors, kappa for vMF.
  double prior_scale() const {
    return prior_kind == PriorKind::vmf_mixture ? prior_concentration : prior_variance;
  }
  /// Throws InvalidInput for inconsistent values, given the data dimension.
  void validate(std::size_t data_dim) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Encoder/decoder pair with its latent prior and training statistics. All
/// networks operate on normalised inputs; `input_scaling` maps raw features
/// into that space.
struct TrainedModel {
  MlpNetwork encoder;
  MlpNetwork decoder;
  Prior prior;
  double residual_variance = 1.0;  // variance of x - f(g(x)) over the train set
  TrainConfig config;
  double final_loss = 0.0;
  Normalizer input_scaling;

  std::size_t data_dim() const { return decoder.out_dim(); }
  std::size_t latent_dim() const { return decoder.in_dim(); }

  /// g(x), projected onto the unit sphere for vMF priors.
  Vector encode(std::span<const double> x) const;
  Matrix encode(const Matrix& x) const;
  Vector decode(std::span<const double> z) const { return decoder.predict(z); }
  Matrix reconstruct(const Matrix& x) const;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// Variance (n - 1 denominator) of every residual component of x - f(g(x)).
double residual_variance(const TrainedModel& model, const Matrix& x);

/// Mean over rows of |x - f(g(x))|^2 plus beta * unbiased MMD^2 between the
/// encodings and `prior_samples`.
double wae_loss(const MlpNetwork& encoder, const MlpNetwork& decoder, const Prior& prior,
                const Matrix& batch, const Matrix& prior_samples, double beta, double c);

/// Same loss with fresh prior samples drawn from `rng`.
double wae_loss(const MlpNetwork& encoder, const MlpNetwork& decoder, const Prior& prior,
                const Matrix& batch, double beta, double c, Rng& rng);

struct WaeGradient {
  double loss = 0.0;
  double reconstruction = 0.0;
  double mmd = 0.0;
  Vector encoder;
  Vector decoder;
  Vector prior;
};

/// Loss and gradients for a fixed prior draw, so that the sample moves with
/// the trainable prior parameters.
WaeGradient wae_loss_gradient(const MlpNetwork& encoder, const MlpNetwork& decoder,
                              const Prior& prior, const Matrix& batch, const PriorDraw& draw,
                              double beta, double c);

/// Builds networks and prior for `config` without training.
TrainedModel initialize_model(const TrainConfig& config, std::size_t data_dim);

/// ADAM on the WAE loss over uniform mini-batches drawn with replacement.
/// Fully determined by config.seed. `loss_trace`, when given, receives the
/// mini-batch loss of every step. Throws TrainingDiverged on a non-finite loss.
TrainedModel train(const TrainConfig& config, const Matrix& data,
                   std::vector<double>* loss_trace = nullptr);

}  // namespace tscore
