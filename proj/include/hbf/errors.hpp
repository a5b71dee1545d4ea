#pragma once

#include <stdexcept>
#include <string>

namespace hbf {

// Shape or index disagreement between two objects that must agree.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A node, method, or key that does not exist.
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// An operation called in the wrong order (e.g. backward without forward).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Divergence or non-finite values during optimisation.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: missing files, non-finite channels, unknown names.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One or more violated configuration invariants. what() lists all of them.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace hbf
