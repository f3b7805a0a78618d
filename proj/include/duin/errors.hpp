#pragma once

#include <stdexcept>
#include <string>

namespace duin {

/// Incompatible tensor shapes. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller violated an operation's precondition (non-scalar loss, B < 2, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Lookup outside a table's valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// NaN/Inf reached a place where only finite values are legal.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command line or config key.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metric is undefined for the given input (single-class AUC, RelaImpr at base 0.5).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace duin
