#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsex/eval_error.hpp"
#include "dsex/space.hpp"

namespace dsex {

/// Name resolution for expression evaluation.
class Scope {
 public:
  virtual ~Scope() = default;
  virtual std::optional<double> lookup(std::string_view name) const = 0;
};

/// Parameters resolve to raw values, frozen parameters and metrics to their
/// stored values.
class PointScope final : public Scope {
 public:
  PointScope(const Schema& schema, const Point& point) : schema_(schema), point_(point) {}
  std::optional<double> lookup(std::string_view name) const override;

 private:
  const Schema& schema_;
  const Point& point_;
};

class MapScope final : public Scope {
 public:
  explicit MapScope(std::map<std::string, double, std::less<>> values) : values_(std::move(values)) {}
  std::optional<double> lookup(std::string_view name) const override;
  void set(const std::string& name, double v) { values_[name] = v; }

 private:
  std::map<std::string, double, std::less<>> values_;
};

/// Looks names up in `front` first, then in `back`.
class ChainScope final : public Scope {
 public:
  ChainScope(const Scope& front, const Scope& back) : front_(front), back_(back) {}
  std::optional<double> lookup(std::string_view name) const override {
    if (auto v = front_.lookup(name)) return v;
    return back_.lookup(name);
  }

 private:
  const Scope& front_;
  const Scope& back_;
};

enum class ExprType { Number, Boolean };

/// Parsed metric expression: arithmetic over names and decimal literals,
/// comparisons and boolean connectives. Precedence, tightest first:
/// unary minus, * /, + -, comparisons, !, &&, ||. Binary operators are
/// left-associative. Types are checked at parse time.
class MetricExpr {
 public:
  /// Throws Error(SyntaxError) with the byte offset, Error(TypeError) on
  /// operand type mismatches.
  static MetricExpr parse(std::string_view text);

  const std::string& text() const noexcept { return text_; }
  ExprType type() const noexcept;
  /// Distinct free names in first-appearance order.
  std::vector<std::string> names() const;

  Result<double> evaluate(const Scope& scope) const;
  Result<bool> test(const Scope& scope) const;

  Result<double> evaluate(const Schema& schema, const Point& p) const { return evaluate(PointScope(schema, p)); }
  Result<bool> test(const Schema& schema, const Point& p) const { return test(PointScope(schema, p)); }

 private:
  friend class ExprParser;
  enum class Op : std::uint8_t {
    Number, Name, Neg, Add, Sub, Mul, Div, Lt, Le, Gt, Ge, Eq, Ne, Not, And, Or,
  };
  struct Node {
    Op op;
    double number = 0.0;
    std::string name;
    int lhs = -1;
    int rhs = -1;
  };

  MetricExpr() = default;
  double eval_node(int idx, const Scope& scope, std::optional<EvalError>& err) const;

  std::string text_;
  std::shared_ptr<const std::vector<Node>> nodes_;
  int root_ = -1;
};

/// Requires a numeric (or boolean) expression; throws Error(TypeError) otherwise.
MetricExpr parse_numeric(std::string_view text);
MetricExpr parse_predicate(std::string_view text);

}  // namespace dsex
