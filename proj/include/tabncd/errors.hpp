#pragma once

#include <stdexcept>
#include <string>

namespace tabncd {

/// Invalid shapes, hyperparameters or manifest contents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-finite input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API called out of order (e.g. backward without a recorded forward).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A loss or gradient became NaN/inf during optimisation.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tabncd
