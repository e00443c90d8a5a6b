#include "tscore/scoring.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <set>

#include "tscore/errors.hpp"

namespace tscore {

namespace {

void check_dim(const TrainedModel& model, std::span<const double> x) {
  if (x.size() != model.data_dim())
    throw InvalidInput("score: input has dimension " + std::to_string(x.size()) +
                       ", model expects " + std::to_string(model.data_dim()));
}

double residual_norm2(std::span<const double> x, std::span<const double> recon) {
  return squared_distance(x, recon);
}

// Per-point seed derived from the coordinates of x.
std::uint64_t point_seed(std::uint64_t base, std::span<const double> x) {
  std::uint64_t h = mix64(base);
  for (double v : x) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

Vector project_to_sphere(Vector z) {
  const double n = std::sqrt(squared_norm(z));
  if (n > 0.0)
    for (double& v : z) v /= n;
  return z;
}

}  // namespace

std::string_view token(ScoreKind k) {
  switch (k) {
    case ScoreKind::reconstruction_error: return "re";
    case ScoreKind::latent_likelihood: return "pz";
    case ScoreKind::proposed_decoder: return "proposed";
    case ScoreKind::proposed_encoder: return "proposed_enc";
  }
  return "?";
}

ScoreKind parse_score_kind(std::string_view s) {
  if (s == "re" || s == "reconstruction-error") return ScoreKind::reconstruction_error;
  if (s == "pz" || s == "latent-likelihood") return ScoreKind::latent_likelihood;
  if (s == "proposed" || s == "proposed-decoder") return ScoreKind::proposed_decoder;
  if (s == "proposed_enc" || s == "proposed-encoder") return ScoreKind::proposed_encoder;
  throw InvalidInput("unknown score kind '" + std::string(s) + "'");
}

std::vector<ScoreKind> parse_score_kinds(std::string_view csv) {
  std::vector<ScoreKind> out;
  std::set<ScoreKind> seen;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto end = std::min(csv.find(',', start), csv.size());
    const ScoreKind k = parse_score_kind(csv.substr(start, end - start));
    if (!seen.insert(k).second) throw InvalidInput("duplicate score kind '" + std::string(token(k)) + "'");
    out.push_back(k);
    start = end + 1;
  }
  return out;
}

std::string score_column(ScoreKind k) { return "score_" + std::string(token(k)); }

JacobianFactorization pseudo_det(Matrix jacobian, double rank_tolerance) {
  JacobianFactorization f;
  Svd s = svd(jacobian);
  f.jacobian = std::move(jacobian);
  f.singular_values = std::move(s.s);
  const double top = f.singular_values.front();
  for (double v : f.singular_values) {
    if (v > rank_tolerance * top && v > 0.0) {
      f.log_volume += std::log(v);
      ++f.rank;
    }
  }
  f.rank_deficient = f.rank < f.singular_values.size();
  return f;
}

Matrix decoder_jacobian(const MlpNetwork& decoder, std::span<const double> z) {
  return decoder.jacobian(z);
}

Matrix sphere_tangent_basis(std::span<const double> z) {
  const std::size_t k = z.size();
  if (k < 2) throw InvalidInput("sphere tangent basis: dimension must be >= 2");
  const Vector unit = project_to_sphere(Vector(z.begin(), z.end()));
  Vector u = unit;
  u[0] += unit[0] < 0.0 ? -1.0 : 1.0;
  const double q = squared_norm(u);
  // Columns 2..k of the reflection mapping z to -+e_1 span z's orthogonal complement.
  Matrix basis(k, k - 1);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 1; j < k; ++j) basis(i, j - 1) = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / q;
  return basis;
}

double noise_variance(const TrainedModel& model, const ScoreOptions& opts) {
  return opts.noise == NoiseVariance::beta ? model.config.beta : model.residual_variance;
}

double reconstruction_score(const TrainedModel& model, std::span<const double> x) {
  check_dim(model, x);
  const Vector recon = model.decode(model.encode(x));
  return -0.5 * residual_norm2(x, recon) / model.residual_variance;
}

double latent_score(const TrainedModel& model, std::span<const double> x) {
  check_dim(model, x);
  return model.prior.log_density(model.encode(x));
}

ScoreBreakdown proposed_score_at(const TrainedModel& model, std::span<const double> x,
                                 std::span<const double> z, double sigma2, double rank_tolerance) {
  check_dim(model, x);
  if (!(sigma2 > 0.0)) throw InvalidInput("proposed score: sigma^2 must be positive");
  if (z.size() != model.latent_dim()) throw InvalidInput("proposed score: latent dimension mismatch");
  ScoreBreakdown b;
  b.latent_point.assign(z.begin(), z.end());
  const Vector recon = model.decode(z);
  b.residual = -0.5 * residual_norm2(x, recon) / sigma2;
  b.latent = model.prior.log_density(z);
  Matrix jac = decoder_jacobian(model.decoder, z);
  if (model.prior.on_sphere()) jac = matmul(jac, sphere_tangent_basis(z));
  const auto f = pseudo_det(std::move(jac), rank_tolerance);
  b.log_volume = f.log_volume;
  b.rank_deficient = f.rank_deficient;
  b.total = b.latent - b.log_volume + b.residual;
  return b;
}

ScoreBreakdown proposed_score(const TrainedModel& model, std::span<const double> x, double sigma2,
                              double rank_tolerance) {
  check_dim(model, x);
  const Vector z = model.encode(x);
  return proposed_score_at(model, x, z, sigma2, rank_tolerance);
}

ScoreBreakdown encoder_variant_score(const TrainedModel& model, std::span<const double> x,
                                     double sigma2, double rank_tolerance) {
  check_dim(model, x);
  if (model.data_dim() < model.latent_dim())
    throw InvalidInput("encoder score: requires data dimension >= latent dimension");
  if (!(sigma2 > 0.0)) throw InvalidInput("encoder score: sigma^2 must be positive");
  const Vector x_on_manifold = model.decode(model.encode(x));
  ScoreBreakdown b;
  b.residual = -0.5 * residual_norm2(x, x_on_manifold) / sigma2;
  b.latent_point = model.encode(x_on_manifold);
  b.latent = model.prior.log_density(b.latent_point);
  Matrix jac = model.encoder.jacobian(x_on_manifold);
  if (model.prior.on_sphere()) {
    // d(g/|g|)/dx in tangent coordinates: T^T J_g / |g|
    const Vector g = model.encoder.predict(x_on_manifold);
    const double n = std::sqrt(squared_norm(g));
    jac = matmul(transpose(sphere_tangent_basis(b.latent_point)), jac);
    for (double& v : jac.values()) v /= n;
  }
  const auto f = pseudo_det(std::move(jac), rank_tolerance);
  b.log_volume = f.log_volume;
  b.rank_deficient = f.rank_deficient;
  b.total = b.latent + b.log_volume + b.residual;
  return b;
}

Vector refine_latent(const TrainedModel& model, std::span<const double> x,
                     std::span<const double> z0, const RefineOptions& opts, Rng& rng) {
  check_dim(model, x);
  if (z0.size() != model.latent_dim()) throw InvalidInput("refine: latent dimension mismatch");
  const bool sphere = model.prior.on_sphere();
  auto objective = [&](std::span<const double> z) { return squared_distance(model.decode(z), x); };

  auto descend = [&](Vector z) {
    double value = objective(z);
    double step = opts.initial_step;
    for (std::size_t it = 0; it < opts.steps; ++it) {
      const Vector recon = model.decode(z);
      const Matrix jac = model.decoder.jacobian(z);
      Vector grad(z.size(), 0.0);
      for (std::size_t i = 0; i < jac.rows(); ++i) {
        const double r = 2.0 * (recon[i] - x[i]);
        for (std::size_t j = 0; j < z.size(); ++j) grad[j] += r * jac(i, j);
      }
      if (squared_norm(grad) == 0.0) break;
      bool improved = false;
      for (int halving = 0; halving < 40; ++halving) {
        Vector cand = z;
        for (std::size_t j = 0; j < z.size(); ++j) cand[j] -= step * grad[j];
        if (sphere) cand = project_to_sphere(std::move(cand));
        const double v = objective(cand);
        if (v < value) {
          z = std::move(cand);
          value = v;
          step *= 2.0;
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
    }
    return std::pair{std::move(z), value};
  };

  Vector best(z0.begin(), z0.end());
  double best_value = objective(best);
  if (opts.restarts == 0) return best;
  auto [z, v] = descend(best);
  if (v < best_value) best = std::move(z), best_value = v;
  if (opts.restarts > 1) {
    const Matrix starts = model.prior.sample(opts.restarts - 1, rng);
    for (std::size_t r = 0; r < starts.rows(); ++r) {
      auto s = starts.row(r);
      auto [zr, vr] = descend(Vector(s.begin(), s.end()));
      if (vr < best_value) best = std::move(zr), best_value = vr;
    }
  }
  return best;
}

double score(const TrainedModel& model, std::span<const double> x, ScoreKind kind,
             const ScoreOptions& opts) {
  switch (kind) {
    case ScoreKind::reconstruction_error:
      return reconstruction_score(model, x);
    case ScoreKind::latent_likelihood:
      return latent_score(model, x);
    case ScoreKind::proposed_decoder: {
      const double sigma2 = noise_variance(model, opts);
      if (!opts.refine) return proposed_score(model, x, sigma2, opts.rank_tolerance).total;
      Rng rng(point_seed(opts.refine_seed, x));
      const Vector z = refine_latent(model, x, model.encode(x), opts.refine_options, rng);
      return proposed_score_at(model, x, z, sigma2, opts.rank_tolerance).total;
    }
    case ScoreKind::proposed_encoder:
      return encoder_variant_score(model, x, noise_variance(model, opts), opts.rank_tolerance).total;
  }
  throw InvalidInput("score: unknown kind");
}

Matrix score_batch(const TrainedModel& model, const Matrix& x, std::span<const ScoreKind> kinds,
                   const ScoreOptions& opts) {
  if (x.cols() != model.data_dim())
    throw InvalidInput("score: data has dimension " + std::to_string(x.cols()) +
                       ", model expects " + std::to_string(model.data_dim()));
  Matrix out(x.rows(), kinds.size());
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      for (std::size_t k = 0; k < kinds.size(); ++k)
        out(static_cast<std::size_t>(i), k) =
            score(model, x.row(static_cast<std::size_t>(i)), kinds[k], opts);
    } catch (...) {
#pragma omp critical(tscore_score_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace reference {

Matrix score_batch(const TrainedModel& model, const Matrix& x, std::span<const ScoreKind> kinds,
                   const ScoreOptions& opts) {
  if (x.cols() != model.data_dim()) throw InvalidInput("score: data dimension mismatch");
  Matrix out(x.rows(), kinds.size());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < kinds.size(); ++k) out(i, k) = score(model, x.row(i), kinds[k], opts);
  return out;
}

}  // namespace reference

}  // namespace tscore
