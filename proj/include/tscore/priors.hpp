#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "tscore/linalg.hpp"
#include "tscore/random.hpp"

namespace tscore {

enum class PriorKind { standard_normal, gaussian_mixture, vmf_mixture };

std::string_view to_string(PriorKind k);
PriorKind parse_prior_kind(std::string_view name);

/// log I_nu(x) for nu >= 0, x >= 0. Power series up to x = 50, Hankel
/// asymptotic expansion beyond.
double log_bessel_i(double nu, double x);

/// log of the von Mises-Fisher normaliser C_p(kappa) on the unit sphere in R^p.
double vmf_log_normalizer(std::size_t p, double kappa);

/// Base noise for reparameterized sampling: the component of each sample and
/// a draw that does not depend on trainable parameters (standard normal for
/// Gaussians, a vMF sample around e_1 for vMF components).
struct PriorDraw {
  std::vector<std::size_t> component;
  Matrix base;
};

/// Uniformly weighted mixture over the latent space.
///
/// Gaussian components share an isotropic variance; vMF components share a
/// concentration. Component centres (means or unit mean directions) are the
/// trainable parameters; weights, variance and concentration are fixed.
class Prior {
 public:
  Prior() = default;

  static Prior standard_normal(std::size_t dim);
  static Prior gaussian_mixture(Matrix means, double variance);
  static Prior vmf_mixture(Matrix directions, double kappa);

  /// Initial prior for training: a single zero-mean component, or means /
  /// directions scattered at random for larger mixtures.
  static Prior initial(PriorKind kind, std::size_t dim, std::size_t components, double scale,
                       Rng& rng);

  PriorKind kind() const { return kind_; }
  std::size_t dim() const { return centers_.cols(); }
  std::size_t component_count() const { return centers_.rows(); }
  const Matrix& centers() const { return centers_; }
  /// Variance for Gaussian kinds, kappa for vMF.
  double scale() const { return scale_; }
  Vector weights() const;

  /// Latent vectors for vMF priors live on the unit sphere.
  bool on_sphere() const { return kind_ == PriorKind::vmf_mixture; }

  double log_density(std::span<const double> z) const;

  PriorDraw draw(std::size_t n, Rng& rng) const;
  Matrix realize(const PriorDraw& d) const;
  Matrix sample(std::size_t n, Rng& rng) const { return realize(draw(n, rng)); }

  std::size_t trainable_count() const;
  Vector trainable_parameters() const;
  /// vMF directions are renormalised to unit length.
  void set_trainable_parameters(std::span<const double> flat);
  /// Gradient w.r.t. trainable parameters of a loss with gradient
  /// `upstream` w.r.t. realize(d). For vMF the result is projected onto the
  /// tangent space of each direction.
  Vector realize_backward(const PriorDraw& d, const Matrix& upstream) const;

  friend bool operator==(const Prior&, const Prior&) = default;

 private:
  Prior(PriorKind kind, Matrix centers, double scale);

  PriorKind kind_ = PriorKind::standard_normal;
  Matrix centers_;
  double scale_ = 1.0;
};

/// Samples from vMF(e_1, kappa) on the sphere in R^p (Wood's rejection scheme).
Matrix sample_vmf_around_e1(std::size_t n, std::size_t p, double kappa, Rng& rng);

}  // namespace tscore
