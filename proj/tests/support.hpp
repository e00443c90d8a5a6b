#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tscore/data.hpp"
#include "tscore/grid.hpp"
#include "tscore/harness.hpp"
#include "tscore/linalg.hpp"
#include "tscore/mlp.hpp"
#include "tscore/priors.hpp"
#include "tscore/random.hpp"
#include "tscore/scoring.hpp"
#include "tscore/training.hpp"

namespace support {

using tscore::Matrix;
using tscore::Rng;
using tscore::Vector;

// Sets the OpenMP thread count for the lifetime of the object.
struct ThreadScope {
  int previous = 1;
  explicit ThreadScope(int n) {
#ifdef _OPENMP
    previous = omp_get_max_threads();
    omp_set_num_threads(n);
#else
    (void)n;
#endif
  }
  ~ThreadScope() {
#ifdef _OPENMP
    omp_set_num_threads(previous);
#endif
  }
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline Vector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vector v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random swish network with random (non-zero) biases.
inline tscore::MlpNetwork random_mlp(const std::vector<std::size_t>& widths, Rng& rng,
                                     tscore::Activation out = tscore::Activation::linear) {
  auto net = tscore::MlpNetwork::glorot(widths, tscore::Activation::swish, out, rng);
  Vector p = net.parameters();
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& v : p) v += 0.3 * n(rng);
  net.set_parameters(p);
  return net;
}

inline bool close_rel(double a, double b, double tol, double floor = 1e-5) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), floor});
}

// Central differences of f with respect to every entry of x.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, Vector x, double h) {
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Determinant by Gaussian elimination with partial pivoting.
inline double determinant(Matrix a) {
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    if (a(p, c) == 0.0) return 0.0;
    if (p != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(p, k), a(c, k));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
    }
  }
  return det;
}

inline Matrix gram(const Matrix& j) {
  Matrix g(j.cols(), j.cols());
  for (std::size_t a = 0; a < j.cols(); ++a)
    for (std::size_t b = 0; b < j.cols(); ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < j.rows(); ++r) s += j(r, a) * j(r, b);
      g(a, b) = s;
    }
  return g;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Compares wae_loss_gradient with central differences of wae_loss for a
// random small model, batch and fixed prior draw. Relative errors use a floor
// of 1e-6 on the gradient magnitude.
inline GradientCheck wae_gradient_check(std::uint64_t seed, tscore::PriorKind kind) {
  using namespace tscore;
  Rng rng(seed);
  const std::size_t d = uniform_size(rng, 3, 8);
  const std::size_t k = uniform_size(rng, 2, std::min<std::size_t>(d, 4));
  const std::size_t m = kind == PriorKind::standard_normal ? 1 : uniform_size(rng, 1, 4);
  const std::size_t h = uniform_size(rng, 3, 8);
  const std::size_t n = uniform_size(rng, 4, 10);
  const double beta = std::uniform_real_distribution<double>(0.2, 3.0)(rng);
  const double c = std::uniform_real_distribution<double>(0.3, 2.0)(rng);

  const MlpNetwork enc0 = random_mlp({d, h, h, k}, rng);
  const MlpNetwork dec0 = random_mlp({k, h, h, d}, rng);
  const Prior prior0 = kind == PriorKind::standard_normal
                           ? Prior::standard_normal(k)
                           : Prior::initial(kind, k, m, kind == PriorKind::vmf_mixture ? 5.0 : 0.7, rng);
  Prior prior = prior0;
  if (kind == PriorKind::gaussian_mixture) {
    const Matrix means = random_matrix(m, k, rng);
    prior.set_trainable_parameters(means.values());
  }
  const Matrix batch = random_matrix(n, d, rng);
  const PriorDraw draw = prior.draw(n, rng);
  const WaeGradient g = wae_loss_gradient(enc0, dec0, prior, batch, draw, beta, c);

  Vector analytic = g.encoder;
  analytic.insert(analytic.end(), g.decoder.begin(), g.decoder.end());
  analytic.insert(analytic.end(), g.prior.begin(), g.prior.end());
  Vector flat = enc0.parameters();
  const Vector dp = dec0.parameters(), pp = prior.trainable_parameters();
  flat.insert(flat.end(), dp.begin(), dp.end());
  flat.insert(flat.end(), pp.begin(), pp.end());
  const std::size_t ne = enc0.parameter_count(), nd = dec0.parameter_count();

  auto loss = [&](const Vector& v) {
    MlpNetwork enc = enc0, dec = dec0;
    Prior pr = prior;
    const std::span<const double> s(v);
    enc.set_parameters(s.subspan(0, ne));
    dec.set_parameters(s.subspan(ne, nd));
    pr.set_trainable_parameters(s.subspan(ne + nd));
    return wae_loss(enc, dec, pr, batch, pr.realize(draw), beta, c);
  };
  const Vector numeric = numeric_gradient(loss, flat, 1e-5);

  GradientCheck out;
  out.parameters = flat.size();
  if (analytic.size() != numeric.size()) {
    out.max_rel_error = INFINITY;
    return out;
  }
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return out;
}

// Modified Gram-Schmidt on a Gaussian matrix.
inline Matrix orthonormal_columns(std::size_t d, std::size_t k, Rng& rng) {
  Matrix a = random_matrix(d, k, rng);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += a(i, j) * a(i, p);
      for (std::size_t i = 0; i < d; ++i) a(i, j) -= proj * a(i, p);
    }
    double n = 0.0;
    for (std::size_t i = 0; i < d; ++i) n += a(i, j) * a(i, j);
    n = std::sqrt(n);
    for (std::size_t i = 0; i < d; ++i) a(i, j) /= n;
  }
  return a;
}

// Linear decoder z -> A z + b with orthonormal A, least-squares encoder
// x -> A^T (x - b), standard normal prior and noise variance sigma2.
inline tscore::TrainedModel linear_gaussian_model(const Matrix& a, const Vector& b, double sigma2) {
  using namespace tscore;
  const std::size_t d = a.rows(), k = a.cols();
  DenseLayer dec{a, b, Activation::linear};
  Matrix at(k, d);
  Vector eb(k, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      at(j, i) = a(i, j);
      eb[j] -= a(i, j) * b[i];
    }
  TrainedModel m;
  m.encoder = MlpNetwork({DenseLayer{at, eb, Activation::linear}});
  m.decoder = MlpNetwork({dec});
  m.prior = Prior::standard_normal(k);
  m.config.latent_dim = k;
  m.config.prior_kind = PriorKind::standard_normal;
  m.config.beta = sigma2;
  m.residual_variance = sigma2;
  m.input_scaling = Normalizer::identity(d);
  return m;
}

// -1/2 (x - mu)^T S^{-1} (x - mu) by Gaussian elimination in long double.
inline double gaussian_quadratic(const Matrix& cov, const Vector& mu, std::span<const double> x) {
  const std::size_t n = cov.rows();
  std::vector<std::vector<long double>> a(n, std::vector<long double>(n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = cov(i, j);
    a[i][n] = static_cast<long double>(x[i]) - mu[i];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= n; ++j) a[r][j] -= f * a[c][j];
    }
  }
  long double q = 0.0L;
  for (std::size_t i = 0; i < n; ++i) q += (static_cast<long double>(x[i]) - mu[i]) * (a[i][n] / a[i][i]);
  return static_cast<double>(-0.5L * q);
}

// Largest deviation over `pairs` random point pairs between differences of
// proposed scores and differences of the exact log-density of
// x = A z + b + e, z ~ N(0, I_k), e ~ N(0, sigma2 (I - A A^T)).
inline double linear_gaussian_max_error(std::uint64_t seed, std::size_t pairs) {
  using namespace tscore;
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t d = uniform_size(rng, 2, 12);
    const std::size_t k = uniform_size(rng, 1, d - 1);
    const double sigma2 = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
    const Matrix a = orthonormal_columns(d, k, rng);
    const Vector b = random_vector(d, rng);
    const TrainedModel model = linear_gaussian_model(a, b, sigma2);
    Matrix cov(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double aa = 0.0;
        for (std::size_t t = 0; t < k; ++t) aa += a(i, t) * a(j, t);
        cov(i, j) = aa + sigma2 * ((i == j ? 1.0 : 0.0) - aa);
      }
    const Vector x1 = random_vector(d, rng, 2.0), x2 = random_vector(d, rng, 2.0);
    const double got = proposed_score(model, x1, sigma2).total - proposed_score(model, x2, sigma2).total;
    const double want = gaussian_quadratic(cov, b, x1) - gaussian_quadratic(cov, b, x2);
    worst = std::max(worst, std::abs(got - want));
  }
  return worst;
}

// Euclidean distance from (x1, x2) to the curve {(z^2, z)}.
inline double parabola_distance(double x1, double x2) {
  auto d2 = [&](double z) { return (x1 - z * z) * (x1 - z * z) + (x2 - z) * (x2 - z); };
  double best = 0.0, best_d = d2(0.0);
  for (double z = -3.0; z <= 3.0; z += 1e-3)
    if (d2(z) < best_d) best_d = d2(z), best = z;
  for (int it = 0; it < 50; ++it) {
    const double g = -4.0 * best * (x1 - best * best) - 2.0 * (x2 - best);
    const double h = 12.0 * best * best - 4.0 * x1 + 2.0;
    if (h <= 0.0) break;
    const double next = best - g / h;
    if (!(d2(next) <= best_d)) break;
    best = next;
    best_d = d2(next);
  }
  return std::sqrt(best_d);
}

// log p(x) of the generating toy distribution, by quadrature over z.
inline double toy_true_log_density(double x1, double x2) {
  constexpr double pi = 3.14159265358979323846;
  const double h = 1e-3;
  long double acc = 0.0L;
  const double mu = tscore::kToyLatentMean, s2 = tscore::kToyLatentSd * tscore::kToyLatentSd;
  const double v = tscore::kToyNoiseVariance;
  for (double z = mu - 8.0 * std::sqrt(s2); z <= mu + 8.0 * std::sqrt(s2); z += h) {
    const double pz = std::exp(-0.5 * (z - mu) * (z - mu) / s2) / std::sqrt(2.0 * pi * s2);
    const double e2 = (x1 - z * z) * (x1 - z * z) + (x2 - z) * (x2 - z);
    acc += pz * std::exp(-0.5 * e2 / v) / (2.0 * pi * v) * h;
  }
  return std::log(static_cast<double>(acc));
}

// Ties counted half, anomalies expected to score lower.
inline double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  long long twice = 0, pairs = 0;
  for (std::size_t a = 0; a < s.size(); ++a) {
    if (y[a] != 1) continue;
    for (std::size_t n = 0; n < s.size(); ++n) {
      if (y[n] != 0) continue;
      ++pairs;
      twice += s[a] < s[n] ? 2 : (s[a] == s[n] ? 1 : 0);
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

// Toy probe sets: fresh samples from the generating distribution and the grid
// cells outside its support where the reconstruction score is highest. A cell
// is outside the support when its true log density falls below the 1%
// quantile of the training samples' log densities.
struct ToyProbes {
  Matrix on_manifold;
  Matrix off_manifold;
  double off_threshold = 0.0;
};

inline ToyProbes toy_probes(const tscore::TrainedModel& model, std::uint64_t seed, std::size_t on_count = 200,
                            std::size_t off_count = 50) {
  using namespace tscore;
  ToyProbes p;
  const Dataset train = toy_generate(2000, derive_seed(seed, {10}));
  std::vector<double> dens;
  for (std::size_t i = 0; i < train.size(); ++i) dens.push_back(toy_true_log_density(train.features(i, 0), train.features(i, 1)));
  std::sort(dens.begin(), dens.end());
  p.off_threshold = dens[static_cast<std::size_t>(0.01 * static_cast<double>(dens.size() - 1))];
  p.on_manifold = toy_generate(on_count, derive_seed(seed, {30})).features;

  GridSpec spec;
  const std::vector<ScoreKind> re{ScoreKind::reconstruction_error};
  const GridTable g = grid_eval(model, re, spec);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t r = 0; r < g.points.rows(); ++r)
    if (toy_true_log_density(g.points(r, 0), g.points(r, 1)) < p.off_threshold) cand.emplace_back(-g.scores(r, 0), r);
  std::sort(cand.begin(), cand.end());
  p.off_manifold = Matrix(std::min(off_count, cand.size()), 2);
  for (std::size_t i = 0; i < p.off_manifold.rows(); ++i) {
    p.off_manifold(i, 0) = g.points(cand[i].second, 0);
    p.off_manifold(i, 1) = g.points(cand[i].second, 1);
  }
  return p;
}

// AUC of one score kind with the off-manifold probes as the anomalous class.
inline double toy_probe_auc(const tscore::TrainedModel& model, const ToyProbes& p, tscore::ScoreKind kind,
                            const tscore::ScoreOptions& opts = {}) {
  using namespace tscore;
  const std::vector<ScoreKind> kinds{kind};
  const Matrix on = score_batch(model, p.on_manifold, kinds, opts);
  const Matrix off = score_batch(model, p.off_manifold, kinds, opts);
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < on.rows(); ++i) s.push_back(on(i, 0)), y.push_back(0);
  for (std::size_t i = 0; i < off.rows(); ++i) s.push_back(off(i, 0)), y.push_back(1);
  return auc(s, y);
}

inline double toy_true_density_auc(const ToyProbes& p) {
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < p.on_manifold.rows(); ++i)
    s.push_back(toy_true_log_density(p.on_manifold(i, 0), p.on_manifold(i, 1))), y.push_back(0);
  for (std::size_t i = 0; i < p.off_manifold.rows(); ++i)
    s.push_back(toy_true_log_density(p.off_manifold(i, 0), p.off_manifold(i, 1))), y.push_back(1);
  return tscore::auc(s, y);
}

}  // namespace support
