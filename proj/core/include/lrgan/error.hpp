#pragma once

#include <stdexcept>
#include <string>

namespace lrgan {

/// Invalid user-supplied configuration (bad field value, non-divisible factor, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller broke a documented precondition (shape mismatch, wrong resolution).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a loss turns non-finite during training.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lrgan
