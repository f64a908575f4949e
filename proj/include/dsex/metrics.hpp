#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsex/error.hpp"
#include "dsex/eval_error.hpp"
#include "dsex/expr.hpp"
#include "dsex/space.hpp"

namespace dsex {

using MetricValues = std::vector<double>;

/// Produces a fixed, ordered list of metrics for a point. Implementations
/// must be safe to call concurrently.
class Evaluator {
 public:
  Evaluator(std::string name, std::vector<std::string> produces, bool nondeterministic = false);
  virtual ~Evaluator() = default;

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& produces() const noexcept { return produces_; }
  std::size_t arity() const noexcept { return produces_.size(); }
  bool nondeterministic() const noexcept { return nondeterministic_; }

  virtual Result<MetricValues> evaluate(const Schema& schema, const Point& point) const = 0;

 private:
  std::string name_;
  std::vector<std::string> produces_;
  bool nondeterministic_;
};

using EvaluatorPtr = std::shared_ptr<const Evaluator>;

/// Cost functions written in the expression language, evaluated in order.
/// Later formulas may read metrics produced by earlier ones.
class ExprEvaluator final : public Evaluator {
 public:
  ExprEvaluator(std::string name, std::vector<std::pair<std::string, std::string>> formulas);
  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override;

 private:
  std::vector<MetricExpr> exprs_;
};

/// Host-code evaluator.
class FunctionEvaluator final : public Evaluator {
 public:
  using Fn = std::function<Result<MetricValues>(const Schema&, const Point&)>;
  FunctionEvaluator(std::string name, std::vector<std::string> produces, Fn fn, bool nondeterministic = false)
      : Evaluator(std::move(name), std::move(produces), nondeterministic), fn_(std::move(fn)) {}
  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override { return fn_(schema, point); }

 private:
  Fn fn_;
};

/// Write-once memo of evaluator results (including failures), keyed by
/// evaluator name and the point's full configuration (every parameter and
/// frozen parameter at its raw value). Safe for concurrent use.
class EvalCache {
 public:
  struct Stats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
  };
  struct Lookup {
    Result<MetricValues> result;
    bool computed;
  };

  Lookup get_or_compute(const Evaluator& ev, const Schema& schema, const Point& point);

  Stats stats() const noexcept { return {hits_.load(), misses_.load()}; }
  std::size_t size() const;

  static std::string key(const Evaluator& ev, const Schema& schema, const Point& point);

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, Result<MetricValues>> entries_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

struct FailPolicy {
  enum class Kind { Abort, PruneFailed, AssignWorst };
  Kind kind = Kind::Abort;
  /// Per-metric worst value used by AssignWorst; no default is inferred.
  std::map<std::string, double> worst;

  static FailPolicy abort() { return {}; }
  static FailPolicy prune_failed() { return {Kind::PruneFailed, {}}; }
  static FailPolicy assign_worst(std::map<std::string, double> worst) { return {Kind::AssignWorst, std::move(worst)}; }
};

std::string_view to_string(FailPolicy::Kind kind);

/// Raised under the Abort policy. Carries the first failure in point order.
class EvaluationAborted : public Error {
 public:
  explicit EvaluationAborted(EvalError err)
      : Error(ErrorKind::EvaluationAborted, err.describe()), error_(std::move(err)) {}
  const EvalError& eval_error() const noexcept { return error_; }

 private:
  EvalError error_;
};

struct TransformStats {
  std::size_t invocations = 0;  // evaluator calls that missed the cache
  std::size_t cache_hits = 0;
  std::size_t failures = 0;
  std::size_t points_evaluated = 0;  // points needing at least one fresh call
};

/// Result of running an evaluator chain on one point. `point` is empty when
/// the point was pruned by PruneFailed; `error` holds the first failure.
struct PointOutcome {
  std::optional<Point> point;
  std::optional<EvalError> error;
  TransformStats stats;
};

/// Runs every evaluator in order on a single point, appending their metrics.
/// Throws Error(NameCollision) if a produced name already exists on the
/// point and Error(ConfigError) if AssignWorst lacks a worst value.
PointOutcome enhance_point(const Schema& schema, const Point& point, std::span<const EvaluatorPtr> evaluators,
                           EvalCache& cache, const FailPolicy& policy);

/// Applies an estimation transform to every point, preserving order.
/// Points are evaluated concurrently up to `parallelism`; results are
/// assembled by point index.
DesignSpace apply_transform(const DesignSpace& space, std::span<const EvaluatorPtr> evaluators, EvalCache& cache,
                            const FailPolicy& policy, int parallelism = 1, TransformStats* stats = nullptr);

inline DesignSpace apply_transform(const DesignSpace& space, const EvaluatorPtr& evaluator, EvalCache& cache,
                                   const FailPolicy& policy, int parallelism = 1, TransformStats* stats = nullptr) {
  return apply_transform(space, std::span<const EvaluatorPtr>(&evaluator, 1), cache, policy, parallelism, stats);
}

/// Runs fn(i) for i in [0, n) on up to `parallelism` threads. The first
/// exception thrown (lowest index among those observed) is rethrown.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn);

}  // namespace dsex
