#pragma once

#include <stdexcept>
#include <string>

namespace fusion {

// Bad inputs: malformed data, out-of-domain parameters, schema violations.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: indefinite systems, non-finite objectives, degenerate scales.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw validation_error(msg);
}

}  // namespace fusion
