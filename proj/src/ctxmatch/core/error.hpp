#pragma once

#include <stdexcept>
#include <string>

namespace ctxmatch {

/// Base for all errors raised by the library. Contract violations (unknown
/// ids, scheduling in the past, double kills) throw; expected domain outcomes
/// such as a rejected bundle or a fetch miss are returned as values.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxmatch
