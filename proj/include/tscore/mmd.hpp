#pragma once

#include <span>

#include "tscore/linalg.hpp"

namespace tscore {

/// Inverse multiquadric kernel c / (c + |x - y|^2). Values lie in (0, 1].
double imq_kernel(std::span<const double> x, std::span<const double> y, double c);

/// Unbiased (U-statistic) estimate of MMD^2 between the row samples of x and z
/// under the IMQ kernel of width c. Can be slightly negative. The value is
/// bit-identical under any permutation of the rows of x or z.
double mmd2_unbiased(const Matrix& x, const Matrix& z, double c);

struct MmdGradient {
  double value = 0.0;
  Matrix wrt_x;
  Matrix wrt_z;
};

MmdGradient mmd2_unbiased_with_gradient(const Matrix& x, const Matrix& z, double c);

}  // namespace tscore
