#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsex {

/// Structural failures of the engine (invalid schemas, impossible
/// projections, malformed configs). Evaluator failures are values, see
/// EvalError in metrics.hpp.
enum class ErrorKind {
  InvalidSchema,
  NoSuchConcern,
  AllDimensionsRemoved,
  PointNotInSpace,
  NotAFullGrid,
  EmptySpace,
  NameCollision,
  SyntaxError,
  TypeError,
  NameNotFound,
  ConfigError,
  EvaluationAborted,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dsex
