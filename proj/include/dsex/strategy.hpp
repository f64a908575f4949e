#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsex/expr.hpp"
#include "dsex/metrics.hpp"
#include "dsex/space.hpp"

namespace dsex {

/// Per-step provenance.
struct StepStats {
  std::string name;
  std::string kind;
  std::size_t input_size = 0;
  std::size_t output_size = 0;
  TransformStats transform;
  std::size_t points_visited = 0;         // distinct points the step ran its evaluators on
  std::size_t predicate_evaluations = 0;  // quick prune: grid points whose keep-condition was computed
  double wall_time_s = 0.0;
  std::vector<std::string> removed_dimensions;
  std::vector<std::string> notes;
};

struct StepContext {
  EvalCache& cache;
  int parallelism = 1;
  FailPolicy policy;
  StepStats* stats = nullptr;
};

/// A space-to-space function. apply() never mutates its input.
class Step {
 public:
  Step(std::string name, std::vector<EvaluatorPtr> evaluators)
      : name_(std::move(name)), evaluators_(std::move(evaluators)) {}
  virtual ~Step() = default;

  const std::string& name() const noexcept { return name_; }
  const std::vector<EvaluatorPtr>& evaluators() const noexcept { return evaluators_; }
  virtual std::string_view kind() const = 0;

  /// Policy used for this step; the pipeline default applies when unset.
  std::optional<FailPolicy> fail_policy;

  virtual DesignSpace apply(const DesignSpace& input, StepContext& ctx) const = 0;

 private:
  std::string name_;
  std::vector<EvaluatorPtr> evaluators_;
};

using StepPtr = std::shared_ptr<Step>;

enum class KeepSide { UpwardClosed, DownwardClosed };

/// How isOnFrontier looks for a pruned neighbour. `Corner` inspects only the
/// neighbour on the pruned side of the declared keep side (componentwise
/// lower corner for UpwardClosed), which is exact whenever the keep region is
/// upward (downward) closed. `Full` inspects every Chebyshev neighbour.
enum class FrontierProbe { Corner, Full };

struct QuickPruneOptions {
  explicit QuickPruneOptions(MetricExpr keep_condition) : keep(std::move(keep_condition)) {}

  std::vector<EvaluatorPtr> evaluators;
  MetricExpr keep;
  KeepSide side = KeepSide::UpwardClosed;
  std::optional<std::string> concern;
  FrontierProbe probe = FrontierProbe::Corner;
};

StepPtr identity_step();
StepPtr exhaustive_map(std::vector<EvaluatorPtr> evaluators);
StepPtr exhaustive_sort(std::vector<EvaluatorPtr> evaluators, MetricExpr key, bool ascending);
StepPtr exhaustive_prune(std::vector<EvaluatorPtr> evaluators, MetricExpr keep);
StepPtr reduce_dimension(std::string concern, bool project_to_min);
StepPtr gradient_sort(std::vector<EvaluatorPtr> evaluators, MetricExpr objective, bool maximize);
StepPtr quick_prune(QuickPruneOptions options);

/// Detailed quick-prune outcome, exposed for tests.
struct QuickPruneTrace {
  std::optional<std::size_t> seed;              // grid index of the Start point
  std::vector<std::size_t> frontier;            // grid indices, sorted
  std::vector<std::size_t> evaluated;           // grid indices whose keep-condition was computed, sorted
  std::vector<std::size_t> kept;                // grid indices retained by Update, sorted
};

/// Runs quick pruning directly on a full grid.
QuickPruneTrace quick_prune_trace(const DesignSpace& grid, const QuickPruneOptions& options, StepContext& ctx,
                                  std::vector<std::optional<Point>>* enhanced = nullptr);

struct Pipeline {
  std::vector<StepPtr> steps;
  int parallelism = 1;
  FailPolicy default_policy;
  /// When set, replaces every step's own policy.
  std::optional<FailPolicy> policy_override;
};

struct PipelineRun {
  DesignSpace space;
  std::vector<StepStats> steps;
  EvalCache::Stats cache_before;
  EvalCache::Stats cache_after;
  double wall_time_s = 0.0;
  /// Set when a step failed; `space` then holds the last good space.
  std::optional<std::string> error;
  std::optional<EvalError> eval_error;
  std::optional<std::size_t> failed_step;
};

/// Threads the space through the steps in listed order.
PipelineRun run_pipeline(const Pipeline& pipeline, const DesignSpace& space, EvalCache& cache);

}  // namespace dsex
