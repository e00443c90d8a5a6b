#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tscore {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_row(std::span<const double> row);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  Vector column(std::size_t c) const;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}
double frobenius_norm(const Matrix& m);

/// Thin singular value decomposition m = U diag(S) V^T.
///
/// For a d x k input, U is d x min(d,k), S has min(d,k) non-negative entries in
/// descending order, and V is k x min(d,k). Columns of U and V are orthonormal;
/// columns of U paired with zero singular values are completed to an
/// orthonormal set. Computed by one-sided (Hestenes) Jacobi rotations, which
/// keeps small singular values accurate to high relative precision.
/// Throws InvalidInput on empty or non-finite input.
struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};
Svd svd(const Matrix& m);

}  // namespace tscore
