#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tscore/linalg.hpp"
#include "tscore/random.hpp"
#include "tscore/training.hpp"

namespace tscore {

// All scores are unnormalised log-densities: lower means more anomalous.
// Inputs are in the model's normalised space (see TrainedModel::input_scaling).

enum class ScoreKind { reconstruction_error, latent_likelihood, proposed_decoder, proposed_encoder };

inline constexpr std::array<ScoreKind, 4> kAllScoreKinds{
    ScoreKind::reconstruction_error, ScoreKind::latent_likelihood, ScoreKind::proposed_decoder,
    ScoreKind::proposed_encoder};

/// Short token used in file formats: re, pz, proposed, proposed_enc.
std::string_view token(ScoreKind k);
/// Accepts the short tokens and the long names (reconstruction-error, ...).
ScoreKind parse_score_kind(std::string_view s);
/// Comma-separated list; duplicates rejected.
std::vector<ScoreKind> parse_score_kinds(std::string_view csv);
std::string score_column(ScoreKind k);  // "score_" + token

inline constexpr double kRankTolerance = 1e-9;

struct JacobianFactorization {
  Matrix jacobian;
  Vector singular_values;  // descending
  double log_volume = 0.0;  // sum of log s_i over s_i > tol * s_1
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// Volume element of a rectangular Jacobian via its SVD. Either orientation
/// (d x k or k x d) is accepted; the result depends only on singular values.
JacobianFactorization pseudo_det(Matrix jacobian, double rank_tolerance = kRankTolerance);

Matrix decoder_jacobian(const MlpNetwork& decoder, std::span<const double> z);

/// Orthonormal basis (k x (k-1)) of the tangent space of the unit sphere at z.
Matrix sphere_tangent_basis(std::span<const double> z);

enum class NoiseVariance { beta, residual };

struct RefineOptions {
  std::size_t steps = 100;
  std::size_t restarts = 1;
  double initial_step = 0.1;
};

struct ScoreOptions {
  NoiseVariance noise = NoiseVariance::beta;
  bool refine = false;
  RefineOptions refine_options;
  std::uint64_t refine_seed = 0;
  double rank_tolerance = kRankTolerance;
};

/// sigma^2 of the residual term under `opts`.
double noise_variance(const TrainedModel& model, const ScoreOptions& opts);

/// -1/2 |x - f(g(x))|^2 / sigma_RE^2
double reconstruction_score(const TrainedModel& model, std::span<const double> x);

/// log p(g(x))
double latent_score(const TrainedModel& model, std::span<const double> x);

struct ScoreBreakdown {
  double latent = 0.0;      // log p(z')
  double log_volume = 0.0;  // log of the Jacobian volume element
  double residual = 0.0;    // -|x - x'|^2 / (2 sigma^2)
  double total = 0.0;
  bool rank_deficient = false;
  Vector latent_point;
};

/// log p(z') - log vol J_f(z') - |x - f(z')|^2 / (2 sigma^2) with z' = g(x).
/// For vMF priors the Jacobian is restricted to the tangent space of the sphere.
ScoreBreakdown proposed_score(const TrainedModel& model, std::span<const double> x, double sigma2,
                              double rank_tolerance = kRankTolerance);

/// Same decomposition at a caller-supplied latent point.
ScoreBreakdown proposed_score_at(const TrainedModel& model, std::span<const double> x,
                                 std::span<const double> z, double sigma2,
                                 double rank_tolerance = kRankTolerance);

/// Encoder form: log p(g(x')) + log vol J_g(x') - |x - x'|^2 / (2 sigma^2),
/// x' = f(g(x)).
ScoreBreakdown encoder_variant_score(const TrainedModel& model, std::span<const double> x,
                                     double sigma2, double rank_tolerance = kRankTolerance);

/// Minimises |f(z) - x|^2 by backtracking gradient descent from z0 and from
/// (restarts - 1) prior samples; returns the best point found. The result never
/// has a larger residual than z0.
Vector refine_latent(const TrainedModel& model, std::span<const double> x,
                     std::span<const double> z0, const RefineOptions& opts, Rng& rng);

double score(const TrainedModel& model, std::span<const double> x, ScoreKind kind,
             const ScoreOptions& opts = {});

/// Row-parallel batch scoring, one column per kind. Rows are independent, so the
/// result does not depend on thread count or row order.
Matrix score_batch(const TrainedModel& model, const Matrix& x, std::span<const ScoreKind> kinds,
                   const ScoreOptions& opts = {});

namespace reference {
Matrix score_batch(const TrainedModel& model, const Matrix& x, std::span<const ScoreKind> kinds,
                   const ScoreOptions& opts = {});
}

}  // namespace tscore
