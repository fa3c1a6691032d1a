#pragma once

#include <stdexcept>
#include <string>

namespace eqmap {

// Configuration or usage problem; the CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data; the CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace eqmap
