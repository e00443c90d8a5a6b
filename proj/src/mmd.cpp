#include "tscore/mmd.hpp"

#include "tscore/errors.hpp"
#include "tscore/kernels.hpp"

namespace tscore {

double imq_kernel(std::span<const double> x, std::span<const double> y, double c) {
  if (!(c > 0.0)) throw InvalidInput("imq kernel: width must be positive");
  if (x.size() != y.size()) throw InvalidInput("imq kernel: dimension mismatch");
  return c / (c + squared_distance(x, y));
}

double mmd2_unbiased(const Matrix& x, const Matrix& z, double c) {
  const auto sums = kernels::imq_sums(x, z, c);
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(z.rows());
  return sums.within_x / (n * (n - 1.0)) + sums.within_z / (m * (m - 1.0)) -
         2.0 * sums.cross / (n * m);
}

MmdGradient mmd2_unbiased_with_gradient(const Matrix& x, const Matrix& z, double c) {
  MmdGradient g;
  g.value = mmd2_unbiased(x, z, c);
  kernels::mmd2_gradient(x, z, c, g.wrt_x, g.wrt_z);
  return g;
}

}  // namespace tscore
