#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation in
// tscore::kernels and a plain serial implementation in
// tscore::kernels::reference that is kept for tests and benchmarks. Both
// produce bit-identical results: the parallel versions only split the
// outermost loop and never reorder a floating-point reduction.

#include <cstddef>
#include <cstdint>

#include "tscore/linalg.hpp"

namespace tscore::kernels {

/// out = op(a) * op(b), op = transpose when the flag is set.
Matrix gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b);

/// Sums of inverse multiquadric kernel values c / (c + |x - y|^2).
struct ImqSums {
  double within_x = 0.0;  // sum over ordered pairs i != j of k(x_i, x_j)
  double within_z = 0.0;  // same for z
  double cross = 0.0;     // sum over all (i, j) of k(x_i, z_j)
};

/// Kernel sums accumulated in 2^-62 fixed point, so the result does not
/// depend on row order or thread count.
ImqSums imq_sums(const Matrix& x, const Matrix& z, double c);

/// Gradient of the unbiased MMD^2 estimate with respect to every row of x and z.
void mmd2_gradient(const Matrix& x, const Matrix& z, double c, Matrix& grad_x, Matrix& grad_z);

namespace reference {
Matrix gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b);
ImqSums imq_sums(const Matrix& x, const Matrix& z, double c);
void mmd2_gradient(const Matrix& x, const Matrix& z, double c, Matrix& grad_x, Matrix& grad_z);
}  // namespace reference

/// Number of threads parallel kernels will use.
int max_threads();

}  // namespace tscore::kernels
