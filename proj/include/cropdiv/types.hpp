#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cropdiv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shape or layer-dimension mismatch in a numerical kernel.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad dims, missing sections, unknown keys).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or unreadable data files (datasets, checkpoints, reports).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or degenerate numerical state.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rejection sampling ran out of attempts.
struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cropdiv
