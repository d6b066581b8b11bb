#pragma once

#include <stdexcept>
#include <string>

namespace sadprune {

// Shapes, tap counts or layer ids that do not line up.
struct structural_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or experiment settings.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Batch or argument does not match an operation's input contract.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN / Inf where finite values are required.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset files missing, unreadable or malformed.
struct ingestion_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sadprune
