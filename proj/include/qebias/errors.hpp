#pragma once

#include <stdexcept>
#include <string>

namespace qebias {

// Malformed datasets, bad arguments, invariant violations in user input.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scorer or translator endpoint misbehaved: timeout, protocol violation,
// unreachable process or socket.
class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A statistic that cannot be computed from the given data.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qebias
