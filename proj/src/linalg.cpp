#include "tscore/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tscore/errors.hpp"

namespace tscore {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidInput("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_row(std::span<const double> row) {
  Matrix m(1, row.size());
  std::copy(row.begin(), row.end(), m.data_.begin());
  return m;
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t l = 0; l < a.cols(); ++l) {
      const double ail = a(i, l);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += ail * b(l, j);
    }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(squared_norm(m.values())); }

namespace {

// Hestenes one-sided Jacobi on a tall (rows >= cols) matrix.
Svd jacobi_tall(const Matrix& m) {
  const std::size_t d = m.rows();
  const std::size_t k = m.cols();
  Matrix a = m;
  Matrix v = Matrix::identity(k);
  constexpr double tol = 1e-15;
  constexpr int max_sweeps = 80;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          alpha += a(i, p) * a(i, p);
          beta += a(i, q) * a(i, q);
          gamma += a(i, p) * a(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < d; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < k; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a(i, j) * a(i, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(d, k), Vector(k), Matrix(k, k)};
  std::vector<bool> filled(k, false);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t src = order[j];
    out.s[j] = norms[src];
    for (std::size_t i = 0; i < k; ++i) out.v(i, j) = v(i, src);
    if (norms[src] > 0.0) {
      for (std::size_t i = 0; i < d; ++i) out.u(i, j) = a(i, src) / norms[src];
      filled[j] = true;
    }
  }

  // Complete U for zero singular values with Gram-Schmidt over unit vectors.
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (filled[j]) continue;
    while (candidate < d) {
      Vector e(d, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t c = 0; c < k; ++c) {
          if (!filled[c]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < d; ++i) proj += out.u(i, c) * e[i];
          for (std::size_t i = 0; i < d; ++i) e[i] -= proj * out.u(i, c);
        }
      const double n = std::sqrt(squared_norm(e));
      if (n > 1e-8) {
        for (std::size_t i = 0; i < d; ++i) out.u(i, j) = e[i] / n;
        filled[j] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

Svd svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidInput("svd: empty matrix");
  if (!m.all_finite()) throw InvalidInput("svd: non-finite entry");
  if (m.rows() >= m.cols()) return jacobi_tall(m);
  Svd t = jacobi_tall(transpose(m));
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

}  // namespace tscore
