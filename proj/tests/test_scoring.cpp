#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "tscore/errors.hpp"
#include "tscore/scoring.hpp"

using namespace tscore;
using support::random_matrix;
using support::random_vector;

namespace {

TrainedModel random_model(std::size_t d, std::size_t k, PriorKind kind, Rng& rng) {
  TrainConfig c;
  c.hidden_width = 6;
  c.hidden_layers = 2;
  c.latent_dim = k;
  c.prior_kind = kind;
  c.mixture_components = kind == PriorKind::standard_normal ? 1 : 3;
  c.beta = 0.3;
  TrainedModel m = initialize_model(c, d);
  m.encoder = support::random_mlp({d, 6, 6, k}, rng);
  m.decoder = support::random_mlp({k, 6, 6, d}, rng);
  if (kind == PriorKind::gaussian_mixture) m.prior.set_trainable_parameters(random_matrix(3, k, rng).values());
  m.residual_variance = 0.7;
  return m;
}

}  // namespace

TEST_CASE("score kind tokens") {
  for (ScoreKind k : kAllScoreKinds) CHECK(parse_score_kind(token(k)) == k);
  CHECK(parse_score_kind("reconstruction-error") == ScoreKind::reconstruction_error);
  CHECK(parse_score_kinds("re,pz,proposed") ==
        std::vector{ScoreKind::reconstruction_error, ScoreKind::latent_likelihood, ScoreKind::proposed_decoder});
  CHECK(score_column(ScoreKind::proposed_encoder) == "score_proposed_enc");
  CHECK_THROWS_AS(parse_score_kinds("re,re"), InvalidInput);
  CHECK_THROWS_AS(parse_score_kinds("re,"), InvalidInput);
  CHECK_THROWS_AS(parse_score_kind("elbo"), InvalidInput);
}

TEST_CASE("log volume equals half the log Gram determinant") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = support::uniform_size(rng, 1, 8);
    const std::size_t d = support::uniform_size(rng, k, 16);
    const Matrix j = random_matrix(d, k, rng);
    const double want = 0.5 * std::log(support::determinant(support::gram(j)));
    const auto f = pseudo_det(j);
    CHECK(std::abs(f.log_volume - want) < 1e-8);
    CHECK(f.rank == k);
    CHECK(!f.rank_deficient);
    CHECK(std::abs(pseudo_det(transpose(j)).log_volume - want) < 1e-8);
    CHECK(std::is_sorted(f.singular_values.rbegin(), f.singular_values.rend()));
  }
}

TEST_CASE("log volume is invariant under orthogonal maps") {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = support::uniform_size(rng, 1, 6), d = support::uniform_size(rng, k, 10);
    const Matrix j = random_matrix(d, k, rng);
    const Matrix q = support::orthonormal_columns(d, d, rng);
    const Matrix r = support::orthonormal_columns(k, k, rng);
    CHECK(pseudo_det(matmul(matmul(q, j), r)).log_volume == doctest::Approx(pseudo_det(j).log_volume).epsilon(1e-10));
  }
}

TEST_CASE("rank deficiency") {
  Rng rng(23);
  Matrix j = random_matrix(6, 3, rng);
  for (std::size_t i = 0; i < 6; ++i) j(i, 2) = 2.0 * j(i, 0) - j(i, 1);
  const auto f = pseudo_det(j);
  CHECK(f.rank == 2);
  CHECK(f.rank_deficient);
  const Matrix two = [&] {
    Matrix m(6, 2);
    for (std::size_t i = 0; i < 6; ++i) m(i, 0) = j(i, 0), m(i, 1) = j(i, 1);
    return m;
  }();
  CHECK(std::isfinite(f.log_volume));
  CHECK(pseudo_det(Matrix(4, 2)).rank == 0);
  CHECK(pseudo_det(Matrix(4, 2)).log_volume == 0.0);
  CHECK(pseudo_det(two).rank == 2);
}

TEST_CASE("decoder Jacobian matches finite differences") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = support::uniform_size(rng, 1, 8), d = support::uniform_size(rng, k, 16);
    const MlpNetwork dec = support::random_mlp({k, 10, 10, d}, rng);
    const Vector z = random_vector(k, rng);
    const Matrix j = decoder_jacobian(dec, z);
    for (std::size_t c = 0; c < k; ++c) {
      Vector up = z, down = z;
      up[c] += 1e-6;
      down[c] -= 1e-6;
      const Vector fu = dec.predict(up), fd = dec.predict(down);
      for (std::size_t r = 0; r < d; ++r) CHECK(std::abs(j(r, c) - (fu[r] - fd[r]) / 2e-6) < 1e-5);
    }
  }
}

TEST_CASE("sphere tangent basis is orthonormal and orthogonal to the point") {
  Rng rng(25);
  std::vector<Vector> points{{1, 0, 0}, {-1, 0, 0}, {0, 0, 1}, {1, 1e-12, 0}};
  for (int i = 0; i < 30; ++i) points.push_back(random_vector(support::uniform_size(rng, 2, 7), rng));
  for (const Vector& z : points) {
    const Matrix t = sphere_tangent_basis(z);
    const std::size_t k = z.size();
    REQUIRE(t.rows() == k);
    REQUIRE(t.cols() == k - 1);
    const double n = std::sqrt(squared_norm(z));
    for (std::size_t a = 0; a < k - 1; ++a) {
      double along = 0.0;
      for (std::size_t r = 0; r < k; ++r) along += t(r, a) * z[r] / n;
      CHECK(std::abs(along) < 1e-12);
      for (std::size_t b = 0; b < k - 1; ++b) {
        double g = 0.0;
        for (std::size_t r = 0; r < k; ++r) g += t(r, a) * t(r, b);
        CHECK(std::abs(g - (a == b ? 1.0 : 0.0)) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(sphere_tangent_basis(Vector{1.0}), InvalidInput);
}

TEST_CASE("linear Gaussian model has exact score differences") {
  CHECK(support::linear_gaussian_max_error(26, 100) < 1e-6);
}

TEST_CASE("encoder form agrees with the decoder form on a linear model") {
  Rng rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = support::uniform_size(rng, 2, 9), k = support::uniform_size(rng, 1, d - 1);
    const TrainedModel m = support::linear_gaussian_model(support::orthonormal_columns(d, k, rng), random_vector(d, rng), 0.4);
    const Vector x = random_vector(d, rng);
    const auto dec = proposed_score(m, x, 0.4), enc = encoder_variant_score(m, x, 0.4);
    CHECK(enc.total == doctest::Approx(dec.total).epsilon(1e-10));
    CHECK(std::abs(dec.log_volume) < 1e-10);
    CHECK(std::abs(enc.log_volume) < 1e-10);
  }
}

TEST_CASE("score components") {
  Rng rng(28);
  for (PriorKind kind : {PriorKind::standard_normal, PriorKind::gaussian_mixture, PriorKind::vmf_mixture}) {
    const TrainedModel m = random_model(5, 3, kind, rng);
    for (int i = 0; i < 10; ++i) {
      const Vector x = random_vector(5, rng);
      const Vector z = m.encode(x);
      const Vector r = m.decode(z);
      const double e2 = squared_distance(x, r);
      CHECK(reconstruction_score(m, x) == doctest::Approx(-0.5 * e2 / 0.7).epsilon(1e-14));
      CHECK(latent_score(m, x) == m.prior.log_density(z));
      const auto b = proposed_score(m, x, 0.3);
      CHECK(b.total == b.latent - b.log_volume + b.residual);
      CHECK(b.residual == doctest::Approx(-0.5 * e2 / 0.3).epsilon(1e-14));
      CHECK(b.latent_point == z);
      ScoreOptions beta, resid;
      resid.noise = NoiseVariance::residual;
      CHECK(score(m, x, ScoreKind::proposed_decoder, beta) == b.total);
      CHECK(score(m, x, ScoreKind::proposed_decoder, resid) == proposed_score(m, x, 0.7).total);
      const auto e = encoder_variant_score(m, x, 0.3);
      CHECK(e.total == e.latent + e.log_volume + e.residual);
    }
  }
}

TEST_CASE("vMF volume uses the tangent space of the sphere") {
  Rng rng(29);
  const TrainedModel m = random_model(6, 3, PriorKind::vmf_mixture, rng);
  const Vector x = random_vector(6, rng);
  const Vector z = m.encode(x);
  const Matrix jt = matmul(decoder_jacobian(m.decoder, z), sphere_tangent_basis(z));
  const double want = 0.5 * std::log(support::determinant(support::gram(jt)));
  CHECK(proposed_score(m, x, 1.0).log_volume == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("latent refinement never increases the residual") {
  Rng rng(30);
  for (PriorKind kind : {PriorKind::gaussian_mixture, PriorKind::vmf_mixture}) {
    const TrainedModel m = random_model(5, 2, kind, rng);
    for (int i = 0; i < 10; ++i) {
      const Vector x = random_vector(5, rng);
      const Vector z0 = m.encode(x);
      RefineOptions o;
      o.restarts = 3;
      o.steps = 30;
      const Vector z = refine_latent(m, x, z0, o, rng);
      CHECK(squared_distance(m.decode(z), x) <= squared_distance(m.decode(z0), x));
      if (kind == PriorKind::vmf_mixture) CHECK(std::abs(squared_norm(z) - 1.0) < 1e-12);
    }
  }
  SUBCASE("finds the least-squares point of a linear decoder") {
    const TrainedModel m = support::linear_gaussian_model(support::orthonormal_columns(6, 2, rng), random_vector(6, rng), 0.1);
    const Vector x = random_vector(6, rng);
    const Vector exact = m.encode(x);
    const Vector z = refine_latent(m, x, Vector{exact[0] + 1.0, exact[1] - 2.0}, {200, 1, 0.1}, rng);
    CHECK(std::sqrt(squared_distance(z, exact)) < 1e-6);
  }
}

TEST_CASE("refined scores do not depend on evaluation order") {
  Rng rng(31);
  const TrainedModel m = random_model(4, 2, PriorKind::gaussian_mixture, rng);
  ScoreOptions o;
  o.refine = true;
  o.refine_options.restarts = 2;
  o.refine_seed = 9;
  const Vector a = random_vector(4, rng), b = random_vector(4, rng);
  const double sa = score(m, a, ScoreKind::proposed_decoder, o);
  score(m, b, ScoreKind::proposed_decoder, o);
  CHECK(score(m, a, ScoreKind::proposed_decoder, o) == sa);
}

TEST_CASE("batch scoring is bit-identical to the serial reference") {
  Rng rng(32);
  const TrainedModel m = random_model(5, 3, PriorKind::vmf_mixture, rng);
  const Matrix x = random_matrix(97, 5, rng);
  const std::vector<ScoreKind> kinds(kAllScoreKinds.begin(), kAllScoreKinds.end());
  const Matrix ref = reference::score_batch(m, x, kinds);
  for (int threads : {1, 2, 4}) {
    support::ThreadScope scope(threads);
    CHECK(score_batch(m, x, kinds) == ref);
  }
  std::vector<std::size_t> perm(97);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Matrix shuffled = score_batch(m, select_rows(x, perm), kinds);
  for (std::size_t i = 0; i < 97; ++i)
    for (std::size_t k = 0; k < kinds.size(); ++k) CHECK(shuffled(i, k) == ref(perm[i], k));
}

TEST_CASE("dimension mismatches are rejected") {
  Rng rng(33);
  const TrainedModel m = random_model(5, 2, PriorKind::standard_normal, rng);
  CHECK_THROWS_AS(reconstruction_score(m, Vector(4)), InvalidInput);
  CHECK_THROWS_AS(proposed_score(m, Vector(6), 1.0), InvalidInput);
  CHECK_THROWS_AS(proposed_score_at(m, Vector(5), Vector(3), 1.0), InvalidInput);
  CHECK_THROWS_AS(proposed_score(m, Vector(5), 0.0), InvalidInput);
  const std::vector<ScoreKind> kinds{ScoreKind::reconstruction_error};
  CHECK_THROWS_AS(score_batch(m, Matrix(3, 4), kinds), InvalidInput);
}

TEST_CASE("hand-evaluable linear cases") {
  const TrainedModel m = support::linear_gaussian_model(Matrix{{1}, {0}}, Vector{0, 0}, 1.0);
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  CHECK(proposed_score(m, Vector{0, 0}, 1.0).total == doctest::Approx(-half_log_2pi).epsilon(1e-15));
  CHECK(proposed_score(m, Vector{0, 1}, 1.0).total == doctest::Approx(-half_log_2pi - 0.5).epsilon(1e-15));
  CHECK(decoder_jacobian(m.decoder, Vector{3.0}) == Matrix{{1}, {0}});

  CHECK(pseudo_det(Matrix{{2, 0}, {0, 3}, {0, 0}, {0, 0}}).log_volume == doctest::Approx(std::log(6.0)).epsilon(1e-15));
  Rng rng(34);
  CHECK(std::abs(pseudo_det(support::orthonormal_columns(7, 3, rng)).log_volume) < 1e-13);

  // Points with the same encoding differ only in the residual term.
  const auto a = proposed_score(m, Vector{0.3, 0.5}, 0.5), b = proposed_score(m, Vector{0.3, -2.0}, 0.5);
  CHECK(a.latent == b.latent);
  CHECK(a.log_volume == b.log_volume);
  CHECK(a.total - b.total == doctest::Approx(a.residual - b.residual).epsilon(1e-15));
  CHECK(latent_score(m, Vector{0.3, 0.5}) == latent_score(m, Vector{0.3, -2.0}));
}

TEST_CASE("reconstruction score examples") {
  TrainedModel m = support::linear_gaussian_model(Matrix{{1}, {0}}, Vector{0, 0}, 1.0);
  m.residual_variance = 0.25;
  CHECK(reconstruction_score(m, Vector{1.7, 0.0}) == 0.0);
  CHECK(reconstruction_score(m, Vector{1.7, 0.5}) == -0.5);
  double prev = 1.0;
  for (double off = 0.0; off < 3.0; off += 0.25) {
    const double s = reconstruction_score(m, Vector{0.2, off});
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("refinement fixed points") {
  Rng rng(35);
  const TrainedModel m = random_model(4, 2, PriorKind::gaussian_mixture, rng);
  const Vector z0 = random_vector(2, rng);
  const Vector x = m.decode(z0);
  CHECK(refine_latent(m, x, z0, {50, 3, 0.1}, rng) == z0);
  const Vector y = random_vector(4, rng);
  CHECK(refine_latent(m, y, z0, {0, 1, 0.1}, rng) == z0);
}
