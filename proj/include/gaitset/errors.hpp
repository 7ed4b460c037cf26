#ifndef GAITSET_ERRORS_HPP_
#define GAITSET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace gaitset {

// Error taxonomy maps onto CLI exit codes: config 2, data 3, numeric 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/extents violations are a config-class failure.
class ShapeError : public ConfigError {
 public:
  explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf surfaced from a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

}  // namespace gaitset

#endif  // GAITSET_ERRORS_HPP_
