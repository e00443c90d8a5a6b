#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tscore {

/// Bad shapes, non-finite values, out-of-range hyper-parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke a documented protocol (e.g. backward pass with a stale tape).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& what)
      : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                           std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/// AUC with a single class present.
class UndefinedAuc : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tscore
