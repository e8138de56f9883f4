// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace freqnet {

/// Caller handed us something outside an operation's contract.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation not valid in the object's current state (e.g. normalizing twice).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Broken internal invariant. Indicates a bug, not bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Runtime failure during training or I/O (non-finite values, unreadable files).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace freqnet
