// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace softtpr {

/// Raised when a matrix that must be invertible has a pivot below the singularity threshold.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an exhaustive search would exceed its configured budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. Carries the seed of the offending batch.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, unsigned long long batch_seed)
      : std::runtime_error(what), batch_seed_(batch_seed) {}
  unsigned long long batch_seed() const noexcept { return batch_seed_; }

 private:
  unsigned long long batch_seed_;
};

}  // namespace softtpr
