#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "tscore/errors.hpp"
#include "tscore/linalg.hpp"

using namespace tscore;
using support::random_matrix;

namespace {

double reconstruction_error(const Matrix& m, const Svd& d) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d.s.size(); ++t) s += d.u(i, t) * d.s[t] * d.v(j, t);
      worst = std::max(worst, std::abs(s - m(i, j)));
    }
  return worst / std::max(1.0, frobenius_norm(m));
}

}  // namespace

TEST_CASE("matrix basics") {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(m.column(1) == Vector{2, 5});
  CHECK(transpose(m)(2, 0) == 3);
  const Matrix p = matmul(m, transpose(m));
  CHECK(p(0, 0) == 14);
  CHECK(p(0, 1) == 32);
  CHECK(p(1, 1) == 77);
  CHECK_THROWS_AS(matmul(m, m), InvalidInput);
  CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), InvalidInput);
  const std::size_t rows[] = {1, 1, 0};
  const Matrix s = select_rows(m, rows);
  CHECK(s.rows() == 3);
  CHECK(s(0, 0) == 4);
  CHECK(s(2, 2) == 3);
  CHECK(Matrix::identity(3)(1, 1) == 1.0);
  CHECK(Matrix::identity(3)(1, 2) == 0.0);
}

TEST_CASE("svd of the identity") {
  const Svd d = svd(Matrix::identity(3));
  REQUIRE(d.s.size() == 3);
  for (double v : d.s) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("svd of a diagonal with a zero") {
  const Svd d = svd(Matrix{{3, 0}, {0, 0}});
  CHECK(d.s[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(d.s[1] == 0.0);
  CHECK(reconstruction_error(Matrix{{3, 0}, {0, 0}}, d) < 1e-14);
}

TEST_CASE("svd of a random 5x2 matches the Gram determinant") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_matrix(5, 2, rng);
    const Svd d = svd(m);
    CHECK(reconstruction_error(m, d) < 1e-10);
    const double g = std::sqrt(support::determinant(support::gram(m)));
    CHECK(d.s[0] * d.s[1] == doctest::Approx(g).epsilon(1e-12));
  }
}

TEST_CASE("svd properties on random shapes") {
  Rng rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t r = support::uniform_size(rng, 1, 12);
    const std::size_t c = support::uniform_size(rng, 1, 12);
    const Matrix m = random_matrix(r, c, rng, 3.0);
    const Svd d = svd(m);
    REQUIRE(d.s.size() == std::min(r, c));
    CHECK(reconstruction_error(m, d) < 1e-10);
    for (std::size_t i = 0; i < d.s.size(); ++i) {
      CHECK(d.s[i] >= 0.0);
      if (i > 0) CHECK(d.s[i] <= d.s[i - 1]);
    }
    // Orthonormal columns of U and V.
    for (const Matrix* q : {&d.u, &d.v}) {
      const Matrix g = support::gram(*q);
      for (std::size_t a = 0; a < g.rows(); ++a)
        for (std::size_t b = 0; b < g.cols(); ++b)
          CHECK(std::abs(g(a, b) - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
  }
}

TEST_CASE("singular values are invariant under row and column permutations") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t r = support::uniform_size(rng, 2, 10);
    const std::size_t c = support::uniform_size(rng, 2, 10);
    const Matrix m = random_matrix(r, c, rng);
    std::vector<std::size_t> pr(r), pc(c);
    std::iota(pr.begin(), pr.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    std::shuffle(pr.begin(), pr.end(), rng);
    std::shuffle(pc.begin(), pc.end(), rng);
    Matrix p(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p(i, j) = m(pr[i], pc[j]);
    const Vector a = svd(m).s, b = svd(p).s;
    const double total_a = std::accumulate(a.begin(), a.end(), 0.0);
    const double total_b = std::accumulate(b.begin(), b.end(), 0.0);
    CHECK(total_a == doctest::Approx(total_b).epsilon(1e-12));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10 * (1.0 + a[0]));
  }
}

TEST_CASE("svd rejects bad input") {
  CHECK_THROWS_AS(svd(Matrix()), InvalidInput);
  CHECK_THROWS_AS(svd(Matrix{{1.0, std::nan("")}}), InvalidInput);
  CHECK_THROWS_AS(svd(Matrix{{1.0, INFINITY}}), InvalidInput);
}
