#pragma once

#include <stdexcept>
#include <string>

namespace aha {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension / shape contract violations.
struct shape_error : error {
  using error::error;
};

// A forward op produced (or was given) a non-finite value. Always fatal.
struct numeric_error : error {
  using error::error;
};

// Bad experiment configuration (unknown keys, invalid values, ...).
struct config_error : error {
  using error::error;
};

// File format / filesystem problems.
struct io_error : error {
  using error::error;
};

}  // namespace aha
