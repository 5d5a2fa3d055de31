#pragma once

#include <stdexcept>
#include <string>

namespace hoi {

/// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar loss, reused tape, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Softmax over a row whose entries are all masked.
class DegenerateRowError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Malformed or inconsistent input data (files, NaN costs, unknown ids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace hoi
