#include "tscore/adam.hpp"

#include <cmath>

#include "tscore/errors.hpp"

namespace tscore {

AdamState::AdamState(std::size_t parameter_count, AdamOptions options)
    : options_(options), first_(parameter_count, 0.0), second_(parameter_count, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != first_.size() || grads.size() != first_.size())
    throw InvalidInput("adam step: parameter/gradient size does not match optimizer state");
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_[i] = b1 * first_[i] + (1.0 - b1) * grads[i];
    second_[i] = b2 * second_[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = first_[i] / correction1;
    const double v_hat = second_[i] / correction2;
    params[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  }
}

void AdamState::restore(Vector first, Vector second, std::size_t steps) {
  if (first.size() != second.size()) throw InvalidInput("adam restore: moment sizes differ");
  first_ = std::move(first);
  second_ = std::move(second);
  steps_ = steps;
}

}  // namespace tscore
