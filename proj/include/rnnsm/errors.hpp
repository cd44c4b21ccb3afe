#pragma once

#include <stdexcept>
#include <string>

namespace rnnsm {

/// Malformed or inconsistent input data (bad session records, non-monotone times).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run or generator configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model artifact does not match the dataset it is applied to, or is missing.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Overflow, non-finite activations, quadrature failure, divergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rnnsm
