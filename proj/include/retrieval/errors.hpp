#pragma once

#include <stdexcept>
#include <string>

namespace retrieval {

/// A value violates a type invariant or an operation precondition.
class InvariantError : public std::invalid_argument {
 public:
  explicit InvariantError(const std::string& what) : std::invalid_argument(what) {}
};

/// An iterative solver stopped before reaching its convergence criterion.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Something that valid inputs should never produce.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace retrieval
