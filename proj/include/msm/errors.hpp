#pragma once

#include <stdexcept>
#include <string>

namespace msm {

/// Invalid user-supplied configuration (bad sizes, unknown keys, degenerate boxes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a precondition (dimension mismatch, wrong layout).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values or an exhausted estimator during a numerical phase.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msm
