#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "dsex/space.hpp"

namespace dsex {

enum class EvalErrorKind { Timeout, ToolFailure, ParseFailure, NameNotFound, DivByZero, NonFinite, Nondeterministic };

std::string_view to_string(EvalErrorKind kind);

/// Evaluator failure. Stored in the cache like a successful result.
struct EvalError {
  EvalErrorKind kind = EvalErrorKind::ToolFailure;
  std::string detail;
  Coords coords;
  int exit_code = 0;

  std::string describe() const;
  friend bool operator==(const EvalError&, const EvalError&) = default;
};

/// Value-or-EvalError. Kept deliberately small; C++20 has no std::expected.
template <class T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(EvalError error) : v_(std::move(error)) {}

  bool ok() const noexcept { return v_.index() == 0; }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const { return std::get<0>(v_); }
  T& value() { return std::get<0>(v_); }
  const EvalError& error() const { return std::get<1>(v_); }

  friend bool operator==(const Result&, const Result&) = default;

 private:
  std::variant<T, EvalError> v_;
};

}  // namespace dsex
