#pragma once

#include <stdexcept>
#include <string>

namespace tmrl {

// Raised for contract violations of the library's operations (failing input
// states, non-monotone snapshots, malformed config, ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tmrl
