#include "tscore/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tscore/errors.hpp"

namespace tscore::kernels {

namespace {

// Minimum multiply-adds for a parallel region.
constexpr std::size_t kParallelWork = 1u << 15;

using Fixed = __int128;

inline Fixed to_fixed(double v) { return static_cast<std::int64_t>(v * 0x1p62); }
inline double from_fixed(Fixed f) { return static_cast<double>(f) * 0x1p-62; }

inline double imq(std::span<const double> a, std::span<const double> b, double c) {
  return c / (c + squared_distance(a, b));
}

void check_gemm_shapes(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  const std::size_t inner_a = ta ? a.rows() : a.cols();
  const std::size_t inner_b = tb ? b.cols() : b.rows();
  if (inner_a != inner_b) throw InvalidInput("gemm: inner dimensions differ");
}

// One output row of op(a) * b.
void gemm_row(const Matrix& a, bool ta, const Matrix& b, std::size_t i, Matrix& out) {
  const std::size_t inner = ta ? a.rows() : a.cols();
  const std::size_t cols = out.cols();
  double* __restrict dst = out.row(i).data();
  for (std::size_t l = 0; l < inner; ++l) {
    const double f = ta ? a(l, i) : a(i, l);
    const double* __restrict src = b.row(l).data();
    for (std::size_t j = 0; j < cols; ++j) dst[j] += f * src[j];
  }
}

Fixed row_sum_within(const Matrix& x, std::size_t i, double c) {
  Fixed acc = 0;
  for (std::size_t j = 0; j < x.rows(); ++j)
    if (j != i) acc += to_fixed(imq(x.row(i), x.row(j), c));
  return acc;
}

Fixed row_sum_cross(const Matrix& x, const Matrix& z, std::size_t i, double c) {
  Fixed acc = 0;
  for (std::size_t j = 0; j < z.rows(); ++j) acc += to_fixed(imq(x.row(i), z.row(j), c));
  return acc;
}

void check_mmd_shapes(const Matrix& x, const Matrix& z, double c) {
  if (x.cols() != z.cols()) throw InvalidInput("mmd: sample dimensions differ");
  if (x.rows() < 2 || z.rows() < 2) throw InvalidInput("mmd: need at least two samples per set");
  if (!(c > 0.0)) throw InvalidInput("mmd: kernel width must be positive");
}

// d/da of k(a, b) accumulated into g with the given weight.
inline void add_imq_grad(std::span<const double> a, std::span<const double> b, double c,
                         double weight, std::span<double> g) {
  const double kv = imq(a, b, c);
  const double f = -2.0 * kv * kv / c * weight;
  for (std::size_t t = 0; t < g.size(); ++t) g[t] += f * (a[t] - b[t]);
}

void gradient_row_x(const Matrix& x, const Matrix& z, double c, std::size_t i, Matrix& gx) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(z.rows());
  const double w_within = 2.0 / (n * (n - 1.0));
  const double w_cross = -2.0 / (n * m);
  auto g = gx.row(i);
  for (std::size_t j = 0; j < x.rows(); ++j)
    if (j != i) add_imq_grad(x.row(i), x.row(j), c, w_within, g);
  for (std::size_t j = 0; j < z.rows(); ++j) add_imq_grad(x.row(i), z.row(j), c, w_cross, g);
}

void gradient_row_z(const Matrix& x, const Matrix& z, double c, std::size_t i, Matrix& gz) {
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(z.rows());
  const double w_within = 2.0 / (m * (m - 1.0));
  const double w_cross = -2.0 / (n * m);
  auto g = gz.row(i);
  for (std::size_t j = 0; j < z.rows(); ++j)
    if (j != i) add_imq_grad(z.row(i), z.row(j), c, w_within, g);
  for (std::size_t j = 0; j < x.rows(); ++j) add_imq_grad(z.row(i), x.row(j), c, w_cross, g);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Matrix gemm(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  check_gemm_shapes(a, ta, b, tb);
  const std::size_t rows = ta ? a.cols() : a.rows();
  const std::size_t cols = tb ? b.rows() : b.cols();
  const std::size_t inner = ta ? a.rows() : a.cols();
  Matrix out(rows, cols);
  const Matrix bt = tb ? transpose(b) : Matrix();
  const Matrix& rhs = tb ? bt : b;
  const bool big = rows * cols * inner >= kParallelWork;
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) gemm_row(a, ta, rhs, static_cast<std::size_t>(i), out);
  return out;
}

ImqSums imq_sums(const Matrix& x, const Matrix& z, double c) {
  check_mmd_shapes(x, z, c);
  std::vector<Fixed> xx(x.rows()), zz(z.rows()), xz(x.rows());
  const bool big = (x.rows() + z.rows()) * (x.rows() + z.rows()) * x.cols() >= kParallelWork;
  const auto nx = static_cast<std::ptrdiff_t>(x.rows());
  const auto nz = static_cast<std::ptrdiff_t>(z.rows());
#pragma omp parallel if (big)
  {
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < nx; ++i) {
      xx[i] = row_sum_within(x, static_cast<std::size_t>(i), c);
      xz[i] = row_sum_cross(x, z, static_cast<std::size_t>(i), c);
    }
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < nz; ++i) zz[i] = row_sum_within(z, static_cast<std::size_t>(i), c);
  }
  Fixed sxx = 0, szz = 0, sxz = 0;
  for (Fixed v : xx) sxx += v;
  for (Fixed v : zz) szz += v;
  for (Fixed v : xz) sxz += v;
  return {from_fixed(sxx), from_fixed(szz), from_fixed(sxz)};
}

void mmd2_gradient(const Matrix& x, const Matrix& z, double c, Matrix& grad_x, Matrix& grad_z) {
  check_mmd_shapes(x, z, c);
  grad_x = Matrix(x.rows(), x.cols());
  grad_z = Matrix(z.rows(), z.cols());
  const bool big = (x.rows() + z.rows()) * (x.rows() + z.rows()) * x.cols() >= kParallelWork;
  const auto nx = static_cast<std::ptrdiff_t>(x.rows());
  const auto nz = static_cast<std::ptrdiff_t>(z.rows());
#pragma omp parallel if (big)
  {
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < nx; ++i) gradient_row_x(x, z, c, static_cast<std::size_t>(i), grad_x);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < nz; ++i) gradient_row_z(x, z, c, static_cast<std::size_t>(i), grad_z);
  }
}

namespace reference {

Matrix gemm(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  check_gemm_shapes(a, ta, b, tb);
  Matrix out(ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols());
  const Matrix bt = tb ? transpose(b) : Matrix();
  const Matrix& rhs = tb ? bt : b;
  for (std::size_t i = 0; i < out.rows(); ++i) gemm_row(a, ta, rhs, i, out);
  return out;
}

ImqSums imq_sums(const Matrix& x, const Matrix& z, double c) {
  check_mmd_shapes(x, z, c);
  Fixed sxx = 0, szz = 0, sxz = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    sxx += row_sum_within(x, i, c);
    sxz += row_sum_cross(x, z, i, c);
  }
  for (std::size_t i = 0; i < z.rows(); ++i) szz += row_sum_within(z, i, c);
  return {from_fixed(sxx), from_fixed(szz), from_fixed(sxz)};
}

void mmd2_gradient(const Matrix& x, const Matrix& z, double c, Matrix& grad_x, Matrix& grad_z) {
  check_mmd_shapes(x, z, c);
  grad_x = Matrix(x.rows(), x.cols());
  grad_z = Matrix(z.rows(), z.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) gradient_row_x(x, z, c, i, grad_x);
  for (std::size_t i = 0; i < z.rows(); ++i) gradient_row_z(x, z, c, i, grad_z);
}

}  // namespace reference

}  // namespace tscore::kernels
