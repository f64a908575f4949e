#include "dsex/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "dsex/error.hpp"

namespace dsex {

std::string_view to_string(EvalErrorKind kind) {
  switch (kind) {
    case EvalErrorKind::Timeout: return "Timeout";
    case EvalErrorKind::ToolFailure: return "ToolFailure";
    case EvalErrorKind::ParseFailure: return "ParseFailure";
    case EvalErrorKind::NameNotFound: return "NameNotFound";
    case EvalErrorKind::DivByZero: return "DivByZero";
    case EvalErrorKind::NonFinite: return "NonFinite";
    case EvalErrorKind::Nondeterministic: return "Nondeterministic";
  }
  return "Unknown";
}

std::string EvalError::describe() const {
  std::string s(to_string(kind));
  if (kind == EvalErrorKind::ToolFailure) s += "(exit " + std::to_string(exit_code) + ")";
  s += " at [";
  for (std::size_t i = 0; i < coords.size(); ++i) s += (i ? "," : "") + std::to_string(coords[i]);
  s += "]";
  if (!detail.empty()) s += ": " + detail;
  return s;
}

std::optional<double> PointScope::lookup(std::string_view name) const {
  if (auto k = schema_.index_of(name))
    return static_cast<double>(schema_[*k].domain.value_at(point_.coords[*k]));
  if (auto* f = point_.find_frozen(name)) return f->value;
  if (auto* m = point_.find_metric(name)) return m->value;
  return std::nullopt;
}

std::optional<double> MapScope::lookup(std::string_view name) const {
  auto it = values_.find(name);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Parser

class ExprParser {
 public:
  using Op = MetricExpr::Op;
  using Node = MetricExpr::Node;

  explicit ExprParser(std::string_view text) : text_(text) {}

  MetricExpr run() {
    MetricExpr e;
    e.text_ = std::string(text_);
    int root = parse_or();
    skip_ws();
    if (pos_ != text_.size()) syntax("unexpected '" + std::string(1, text_[pos_]) + "'");
    e.root_ = root;
    e.nodes_ = std::make_shared<const std::vector<Node>>(std::move(nodes_));
    return e;
  }

 private:
  [[noreturn]] void syntax(const std::string& msg) const {
    throw Error(ErrorKind::SyntaxError, "at offset " + std::to_string(pos_) + " in \"" + std::string(text_) + "\": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  bool is_bool(int idx) const {
    switch (nodes_[static_cast<std::size_t>(idx)].op) {
      case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: case Op::Eq: case Op::Ne:
      case Op::Not: case Op::And: case Op::Or:
        return true;
      default:
        return false;
    }
  }

  void require(int idx, bool want_bool, std::string_view op) const {
    if (is_bool(idx) != want_bool)
      throw Error(ErrorKind::TypeError, "operator '" + std::string(op) + "' expects " +
                                            (want_bool ? "boolean" : "numeric") + " operands in \"" +
                                            std::string(text_) + "\"");
  }

  int add(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  int binary(Op op, int lhs, int rhs) { return add(Node{op, 0.0, {}, lhs, rhs}); }

  int parse_or() {
    int lhs = parse_and();
    while (accept("||")) {
      int rhs = parse_and();
      require(lhs, true, "||");
      require(rhs, true, "||");
      lhs = binary(Op::Or, lhs, rhs);
    }
    return lhs;
  }

  int parse_and() {
    int lhs = parse_not();
    while (accept("&&")) {
      int rhs = parse_not();
      require(lhs, true, "&&");
      require(rhs, true, "&&");
      lhs = binary(Op::And, lhs, rhs);
    }
    return lhs;
  }

  int parse_not() {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '!' && text_.substr(pos_, 2) != "!=") {
      ++pos_;
      int operand = parse_not();
      require(operand, true, "!");
      return add(Node{Op::Not, 0.0, {}, operand, -1});
    }
    return parse_cmp();
  }

  int parse_cmp() {
    int lhs = parse_add();
    while (true) {
      Op op;
      std::string_view sym;
      // Two-character (and UTF-8 three-byte) forms first.
      if (accept("<=") || accept("\xE2\x89\xA4")) op = Op::Le, sym = "<=";
      else if (accept(">=") || accept("\xE2\x89\xA5")) op = Op::Ge, sym = ">=";
      else if (accept("==")) op = Op::Eq, sym = "==";
      else if (accept("!=")) op = Op::Ne, sym = "!=";
      else if (accept("<")) op = Op::Lt, sym = "<";
      else if (accept(">")) op = Op::Gt, sym = ">";
      else break;
      int rhs = parse_add();
      require(lhs, false, sym);
      require(rhs, false, sym);
      lhs = binary(op, lhs, rhs);
    }
    return lhs;
  }

  int parse_add() {
    int lhs = parse_mul();
    while (true) {
      Op op;
      if (accept("+")) op = Op::Add;
      else if (accept("-")) op = Op::Sub;
      else break;
      int rhs = parse_mul();
      require(lhs, false, op == Op::Add ? "+" : "-");
      require(rhs, false, op == Op::Add ? "+" : "-");
      lhs = binary(op, lhs, rhs);
    }
    return lhs;
  }

  int parse_mul() {
    int lhs = parse_unary();
    while (true) {
      Op op;
      if (accept("*")) op = Op::Mul;
      else if (accept("/")) op = Op::Div;
      else break;
      int rhs = parse_unary();
      require(lhs, false, op == Op::Mul ? "*" : "/");
      require(rhs, false, op == Op::Mul ? "*" : "/");
      lhs = binary(op, lhs, rhs);
    }
    return lhs;
  }

  int parse_unary() {
    if (accept("-")) {
      int operand = parse_unary();
      require(operand, false, "-");
      return add(Node{Op::Neg, 0.0, {}, operand, -1});
    }
    return parse_primary();
  }

  int parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) syntax("unexpected end of expression");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = parse_or();
      if (!accept(")")) syntax("expected ')'");
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size()) {
        char d = text_[pos_];
        if ((d >= 'a' && d <= 'z') || (d >= 'A' && d <= 'Z') || (d >= '0' && d <= '9') || d == '_') ++pos_;
        else break;
      }
      return add(Node{Op::Name, 0.0, std::string(text_.substr(start, pos_ - start)), -1, -1});
    }
    syntax("unexpected '" + std::string(1, c) + "'");
  }

  int parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) syntax("malformed number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = mark;
        syntax("malformed exponent");
      }
    }
    double value = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      pos_ = start;
      syntax("malformed number");
    }
    return add(Node{Op::Number, value, {}, -1, -1});
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
};

MetricExpr MetricExpr::parse(std::string_view text) { return ExprParser(text).run(); }

ExprType MetricExpr::type() const noexcept {
  switch ((*nodes_)[static_cast<std::size_t>(root_)].op) {
    case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: case Op::Eq: case Op::Ne:
    case Op::Not: case Op::And: case Op::Or:
      return ExprType::Boolean;
    default:
      return ExprType::Number;
  }
}

std::vector<std::string> MetricExpr::names() const {
  std::vector<std::string> out;
  for (const auto& n : *nodes_)
    if (n.op == Op::Name && std::find(out.begin(), out.end(), n.name) == out.end()) out.push_back(n.name);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

double MetricExpr::eval_node(int idx, const Scope& scope, std::optional<EvalError>& err) const {
  const Node& n = (*nodes_)[static_cast<std::size_t>(idx)];
  auto sub = [&](int i) { return eval_node(i, scope, err); };
  switch (n.op) {
    case Op::Number: return n.number;
    case Op::Name: {
      if (auto v = scope.lookup(n.name)) return *v;
      if (!err) err = EvalError{EvalErrorKind::NameNotFound, n.name, {}, 0};
      return 0.0;
    }
    case Op::Neg: return -sub(n.lhs);
    case Op::Add: return sub(n.lhs) + sub(n.rhs);
    case Op::Sub: return sub(n.lhs) - sub(n.rhs);
    case Op::Mul: return sub(n.lhs) * sub(n.rhs);
    case Op::Div: {
      double a = sub(n.lhs);
      double b = sub(n.rhs);
      if (b == 0.0) {
        if (!err) err = EvalError{EvalErrorKind::DivByZero, "in \"" + text_ + "\"", {}, 0};
        return 0.0;
      }
      return a / b;
    }
    case Op::Lt: return sub(n.lhs) < sub(n.rhs);
    case Op::Le: return sub(n.lhs) <= sub(n.rhs);
    case Op::Gt: return sub(n.lhs) > sub(n.rhs);
    case Op::Ge: return sub(n.lhs) >= sub(n.rhs);
    case Op::Eq: return sub(n.lhs) == sub(n.rhs);
    case Op::Ne: return sub(n.lhs) != sub(n.rhs);
    case Op::Not: return sub(n.lhs) == 0.0;
    case Op::And: return sub(n.lhs) != 0.0 && sub(n.rhs) != 0.0;
    case Op::Or: return sub(n.lhs) != 0.0 || sub(n.rhs) != 0.0;
  }
  return 0.0;
}

Result<double> MetricExpr::evaluate(const Scope& scope) const {
  std::optional<EvalError> err;
  double v = eval_node(root_, scope, err);
  if (err) return *err;
  if (!std::isfinite(v)) return EvalError{EvalErrorKind::NonFinite, "\"" + text_ + "\" is not finite", {}, 0};
  return v;
}

Result<bool> MetricExpr::test(const Scope& scope) const {
  std::optional<EvalError> err;
  double v = eval_node(root_, scope, err);
  if (err) return *err;
  return v != 0.0;
}

MetricExpr parse_numeric(std::string_view text) {
  auto e = MetricExpr::parse(text);
  if (e.type() != ExprType::Number)
    throw Error(ErrorKind::TypeError, "expected a numeric expression, got predicate \"" + std::string(text) + "\"");
  return e;
}

MetricExpr parse_predicate(std::string_view text) {
  auto e = MetricExpr::parse(text);
  if (e.type() != ExprType::Boolean)
    throw Error(ErrorKind::TypeError, "expected a predicate, got numeric expression \"" + std::string(text) + "\"");
  return e;
}

}  // namespace dsex
