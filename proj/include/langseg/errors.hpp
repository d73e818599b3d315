#pragma once

#include <stdexcept>
#include <string>

namespace langseg {

// Shape/dimension violations (bad matmul operands, kernel larger than input, ...).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad values in otherwise well-shaped data (out-of-range class id, NaN gradient, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (negative loss weight, zero steps, unknown config key, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O and format problems; message names the offending path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint/config hash disagreement. Distinct type so the CLI can refuse
// silent architecture drift with its own exit code.
struct ArtifactMismatchError : std::runtime_error {
  explicit ArtifactMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken caller contract (empty scale list, non-deterministic loss function, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace langseg
