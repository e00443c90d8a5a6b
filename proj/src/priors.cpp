#include "tscore/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tscore/errors.hpp"

namespace tscore {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_bessel_series(double nu, double x) {
  const double log_half_x = std::log(0.5 * x);
  double best = -std::numeric_limits<double>::infinity();
  double acc = 0.0;  // sum of exp(term - best)
  for (int m = 0; m < 10000; ++m) {
    const double t = (2.0 * m + nu) * log_half_x - std::lgamma(m + 1.0) - std::lgamma(m + nu + 1.0);
    if (t > best) {
      acc = acc * std::exp(best - t) + 1.0;
      best = t;
    } else {
      acc += std::exp(t - best);
    }
    if (m > 0.5 * x && t < best - 40.0) break;
  }
  return best + std::log(acc);
}

double log_bessel_asymptotic(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 40; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// Householder reflection mapping e_1 to mu, applied to y.
void reflect(std::span<const double> mu, std::span<const double> y, std::span<double> out) {
  const std::size_t p = mu.size();
  double q = 0.0, s = 0.0;
  for (std::size_t t = 0; t < p; ++t) {
    const double u = (t == 0 ? 1.0 : 0.0) - mu[t];
    q += u * u;
    s += u * y[t];
  }
  if (q < 1e-20) {
    std::copy(y.begin(), y.end(), out.begin());
    return;
  }
  for (std::size_t t = 0; t < p; ++t) {
    const double u = (t == 0 ? 1.0 : 0.0) - mu[t];
    out[t] = y[t] - 2.0 * u * s / q;
  }
}

void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double n = std::sqrt(squared_norm(r));
    if (!(n > 0.0)) throw InvalidInput("vMF direction has zero length");
    if (std::abs(n - 1.0) <= 1e-12) continue;
    for (double& v : r) v /= n;
  }
}

}  // namespace

std::string_view to_string(PriorKind k) {
  switch (k) {
    case PriorKind::standard_normal: return "standard-normal";
    case PriorKind::gaussian_mixture: return "gaussian-mixture";
    case PriorKind::vmf_mixture: return "vmf-mixture";
  }
  return "?";
}

PriorKind parse_prior_kind(std::string_view name) {
  if (name == "standard-normal") return PriorKind::standard_normal;
  if (name == "gaussian-mixture") return PriorKind::gaussian_mixture;
  if (name == "vmf-mixture") return PriorKind::vmf_mixture;
  throw InvalidInput("unknown prior kind '" + std::string(name) + "'");
}

double log_bessel_i(double nu, double x) {
  if (nu < 0.0 || x < 0.0 || !std::isfinite(nu) || !std::isfinite(x))
    throw InvalidInput("log_bessel_i: requires finite nu >= 0 and x >= 0");
  if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return x <= std::max(50.0, 2.0 * nu * nu) ? log_bessel_series(nu, x) : log_bessel_asymptotic(nu, x);
}

double vmf_log_normalizer(std::size_t p, double kappa) {
  if (p < 2) throw InvalidInput("vMF requires dimension >= 2");
  if (kappa < 0.0) throw InvalidInput("vMF concentration must be non-negative");
  const double half_p = 0.5 * static_cast<double>(p);
  if (kappa == 0.0)
    return std::lgamma(half_p) - std::log(2.0) - half_p * std::log(std::numbers::pi);
  const double nu = half_p - 1.0;
  return nu * std::log(kappa) - half_p * kLog2Pi - log_bessel_i(nu, kappa);
}

Prior::Prior(PriorKind kind, Matrix centers, double scale)
    : kind_(kind), centers_(std::move(centers)), scale_(scale) {
  if (centers_.rows() == 0 || centers_.cols() == 0) throw InvalidInput("Prior: no components");
  if (!centers_.all_finite()) throw InvalidInput("Prior: non-finite component centre");
  if (kind_ == PriorKind::vmf_mixture) {
    if (centers_.cols() < 2) throw InvalidInput("vMF prior requires latent dimension >= 2");
    if (!(scale_ >= 0.0)) throw InvalidInput("vMF concentration must be non-negative");
    normalize_rows(centers_);
  } else if (!(scale_ > 0.0)) {
    throw InvalidInput("Gaussian prior variance must be positive");
  }
}

Prior Prior::standard_normal(std::size_t dim) {
  return Prior(PriorKind::standard_normal, Matrix(1, dim), 1.0);
}

Prior Prior::gaussian_mixture(Matrix means, double variance) {
  return Prior(PriorKind::gaussian_mixture, std::move(means), variance);
}

Prior Prior::vmf_mixture(Matrix directions, double kappa) {
  return Prior(PriorKind::vmf_mixture, std::move(directions), kappa);
}

Prior Prior::initial(PriorKind kind, std::size_t dim, std::size_t components, double scale,
                     Rng& rng) {
  if (components == 0) throw InvalidInput("Prior: need at least one component");
  std::normal_distribution<double> normal;
  switch (kind) {
    case PriorKind::standard_normal:
      return standard_normal(dim);
    case PriorKind::gaussian_mixture: {
      Matrix means(components, dim);
      if (components > 1)
        for (double& v : means.values()) v = normal(rng);
      return gaussian_mixture(std::move(means), scale);
    }
    case PriorKind::vmf_mixture: {
      if (dim < 2) throw InvalidInput("vMF prior requires latent dimension >= 2");
      Matrix dirs(components, dim);
      for (double& v : dirs.values()) v = normal(rng);
      return vmf_mixture(std::move(dirs), scale);
    }
  }
  throw InvalidInput("Prior: unknown kind");
}

Vector Prior::weights() const {
  return Vector(component_count(), 1.0 / static_cast<double>(component_count()));
}

double Prior::log_density(std::span<const double> z) const {
  if (z.size() != dim())
    throw InvalidInput("prior log density: latent has dimension " + std::to_string(z.size()) +
                       ", prior expects " + std::to_string(dim()));
  const std::size_t m = component_count();
  const double log_w = -std::log(static_cast<double>(m));
  Vector terms(m);
  if (kind_ == PriorKind::vmf_mixture) {
    const double n = std::sqrt(squared_norm(z));
    Vector unit(z.begin(), z.end());
    if (n > 0.0)
      for (double& v : unit) v /= n;
    else
      std::fill(unit.begin(), unit.end(), 0.0);
    const double log_c = vmf_log_normalizer(dim(), scale_);
    for (std::size_t c = 0; c < m; ++c) terms[c] = log_w + log_c + scale_ * dot(centers_.row(c), unit);
  } else {
    const double k = static_cast<double>(dim());
    const double norm_const = -0.5 * k * (kLog2Pi + std::log(scale_));
    for (std::size_t c = 0; c < m; ++c)
      terms[c] = log_w + norm_const - 0.5 * squared_distance(z, centers_.row(c)) / scale_;
  }
  return m == 1 ? terms[0] : log_sum_exp(terms);
}

Matrix sample_vmf_around_e1(std::size_t n, std::size_t p, double kappa, Rng& rng) {
  if (p < 2) throw InvalidInput("vMF requires dimension >= 2");
  const double pm1 = static_cast<double>(p - 1);
  const double b = pm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + pm1 * pm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + pm1 * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> gamma(0.5 * pm1, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;

  Matrix out(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.0;
    for (;;) {
      const double g1 = gamma(rng), g2 = gamma(rng);
      const double beta = g1 / (g1 + g2);
      w = (1.0 - (1.0 + b) * beta) / (1.0 - (1.0 - b) * beta);
      const double u = unif(rng);
      if (kappa * w + pm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
    Vector v(p - 1);
    double vn = 0.0;
    do {
      for (double& t : v) t = normal(rng);
      vn = std::sqrt(squared_norm(v));
    } while (vn == 0.0);
    const double radial = std::sqrt(std::max(0.0, 1.0 - w * w));
    auto row = out.row(i);
    row[0] = w;
    for (std::size_t t = 0; t + 1 < p; ++t) row[t + 1] = radial * v[t] / vn;
  }
  return out;
}

PriorDraw Prior::draw(std::size_t n, Rng& rng) const {
  if (n == 0) throw InvalidInput("prior sample: n must be positive");
  PriorDraw d;
  d.component.resize(n);
  std::uniform_int_distribution<std::size_t> pick(0, component_count() - 1);
  for (auto& c : d.component) c = component_count() == 1 ? 0 : pick(rng);
  if (kind_ == PriorKind::vmf_mixture) {
    d.base = sample_vmf_around_e1(n, dim(), scale_, rng);
  } else {
    std::normal_distribution<double> normal;
    d.base = Matrix(n, dim());
    for (double& v : d.base.values()) v = normal(rng);
  }
  return d;
}

Matrix Prior::realize(const PriorDraw& d) const {
  if (d.base.cols() != dim() || d.base.rows() != d.component.size())
    throw InvalidInput("prior realize: draw does not match prior");
  Matrix z(d.base.rows(), dim());
  const double sd = std::sqrt(scale_);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto center = centers_.row(d.component.at(i));
    if (kind_ == PriorKind::vmf_mixture) {
      reflect(center, d.base.row(i), z.row(i));
    } else {
      for (std::size_t t = 0; t < dim(); ++t) z(i, t) = center[t] + sd * d.base(i, t);
    }
  }
  return z;
}

std::size_t Prior::trainable_count() const {
  return kind_ == PriorKind::standard_normal ? 0 : centers_.size();
}

Vector Prior::trainable_parameters() const {
  if (kind_ == PriorKind::standard_normal) return {};
  return Vector(centers_.values().begin(), centers_.values().end());
}

void Prior::set_trainable_parameters(std::span<const double> flat) {
  if (flat.size() != trainable_count()) throw InvalidInput("prior parameters: size mismatch");
  if (flat.empty()) return;
  Matrix next(centers_.rows(), centers_.cols());
  std::copy(flat.begin(), flat.end(), next.values().begin());
  if (!next.all_finite()) throw InvalidInput("prior parameters: non-finite value");
  if (kind_ == PriorKind::vmf_mixture) normalize_rows(next);
  centers_ = std::move(next);
}

Vector Prior::realize_backward(const PriorDraw& d, const Matrix& upstream) const {
  if (kind_ == PriorKind::standard_normal) return {};
  if (upstream.rows() != d.component.size() || upstream.cols() != dim())
    throw InvalidInput("prior backward: gradient shape mismatch");
  Matrix grad(centers_.rows(), centers_.cols());
  const std::size_t p = dim();
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    const std::size_t c = d.component[i];
    auto g = upstream.row(i);
    auto out = grad.row(c);
    if (kind_ == PriorKind::gaussian_mixture) {
      for (std::size_t t = 0; t < p; ++t) out[t] += g[t];
      continue;
    }
    auto mu = centers_.row(c);
    auto y = d.base.row(i);
    Vector u(p);
    for (std::size_t t = 0; t < p; ++t) u[t] = (t == 0 ? 1.0 : 0.0) - mu[t];
    const double q = squared_norm(u);
    if (q < 1e-20) continue;
    const double s = dot(u, y);
    const double ug = dot(u, g);
    // d/dmu = -d/du of y - 2 u (u.y) / (u.u)
    for (std::size_t t = 0; t < p; ++t)
      out[t] -= -2.0 * (s * g[t] + ug * y[t]) / q + 4.0 * s * ug * u[t] / (q * q);
  }
  if (kind_ == PriorKind::vmf_mixture) {
    for (std::size_t c = 0; c < grad.rows(); ++c) {
      auto g = grad.row(c);
      const double radial = dot(g, centers_.row(c));
      for (std::size_t t = 0; t < p; ++t) g[t] -= radial * centers_(c, t);
    }
  }
  return Vector(grad.values().begin(), grad.values().end());
}

}  // namespace tscore
