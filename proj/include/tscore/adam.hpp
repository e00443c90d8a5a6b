#pragma once

#include <cstddef>
#include <span>

#include "tscore/linalg.hpp"

namespace tscore {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

/// Moment accumulators for one flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamOptions options = {});

  /// One bias-corrected ADAM update of `params` in place.
  void step(std::span<double> params, std::span<const double> grads);

  std::size_t size() const { return first_.size(); }
  std::size_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const Vector& first_moment() const { return first_; }
  const Vector& second_moment() const { return second_; }

  // Test hook for arbitrary states.
  void restore(Vector first, Vector second, std::size_t steps);

  friend bool operator==(const AdamState&, const AdamState&) = default;

 private:
  AdamOptions options_;
  Vector first_;
  Vector second_;
  std::size_t steps_ = 0;
};

}  // namespace tscore
