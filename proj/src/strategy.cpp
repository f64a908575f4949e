#include "dsex/strategy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace dsex {

namespace {

/// Numeric key of a point; NameNotFound is a configuration problem and is
/// raised, other failures are returned.
Result<double> numeric_key(const MetricExpr& expr, const Schema& schema, const Point& p) {
  auto v = expr.evaluate(schema, p);
  if (!v && v.error().kind == EvalErrorKind::NameNotFound)
    throw Error(ErrorKind::NameNotFound, "'" + v.error().detail + "' in \"" + expr.text() + "\"");
  if (!v) {
    EvalError e = v.error();
    e.coords = p.coords;
    return e;
  }
  return v;
}

Result<bool> predicate_value(const MetricExpr& expr, const Schema& schema, const Point& p) {
  auto v = expr.test(schema, p);
  if (!v && v.error().kind == EvalErrorKind::NameNotFound)
    throw Error(ErrorKind::NameNotFound, "'" + v.error().detail + "' in \"" + expr.text() + "\"");
  if (!v) {
    EvalError e = v.error();
    e.coords = p.coords;
    return e;
  }
  return v;
}

void add(TransformStats& into, const TransformStats& s) {
  into.invocations += s.invocations;
  into.cache_hits += s.cache_hits;
  into.failures += s.failures;
  into.points_evaluated += s.points_evaluated;
}

DesignSpace transform_if_any(const DesignSpace& in, const std::vector<EvaluatorPtr>& evs, StepContext& ctx) {
  if (evs.empty()) return in;
  TransformStats ts;
  DesignSpace out = apply_transform(in, evs, ctx.cache, ctx.policy, ctx.parallelism, &ts);
  if (ctx.stats) {
    add(ctx.stats->transform, ts);
    ctx.stats->points_visited += in.size();
  }
  return out;
}

// ---------------------------------------------------------------------------

class IdentityStep final : public Step {
 public:
  IdentityStep() : Step("identity", {}) {}
  std::string_view kind() const override { return "identity"; }
  DesignSpace apply(const DesignSpace& input, StepContext&) const override { return input; }
};

class MapStep final : public Step {
 public:
  explicit MapStep(std::vector<EvaluatorPtr> evs) : Step("map", std::move(evs)) {}
  std::string_view kind() const override { return "map"; }
  DesignSpace apply(const DesignSpace& input, StepContext& ctx) const override {
    return transform_if_any(input, evaluators(), ctx);
  }
};

class SortStep final : public Step {
 public:
  SortStep(std::vector<EvaluatorPtr> evs, MetricExpr key, bool ascending)
      : Step("sort", std::move(evs)), key_(std::move(key)), ascending_(ascending) {}
  std::string_view kind() const override { return "sort"; }

  DesignSpace apply(const DesignSpace& input, StepContext& ctx) const override {
    DesignSpace space = transform_if_any(input, evaluators(), ctx);
    std::vector<std::pair<double, std::size_t>> keyed;
    std::vector<Point> dropped_errors;
    for (std::size_t i = 0; i < space.size(); ++i) {
      auto k = numeric_key(key_, space.schema(), space[i]);
      if (!k) {
        if (ctx.policy.kind == FailPolicy::Kind::Abort) throw EvaluationAborted(k.error());
        // Unrankable points sort last.
        keyed.emplace_back(ascending_ ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity(),
                           i);
        continue;
      }
      keyed.emplace_back(k.value(), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      return ascending_ ? a.first < b.first : a.first > b.first;
    });
    std::vector<Point> points;
    points.reserve(space.size());
    for (const auto& [k, i] : keyed) points.push_back(space[i]);
    return space.with_points(std::move(points));
  }

 private:
  MetricExpr key_;
  bool ascending_;
};

class PruneStep final : public Step {
 public:
  PruneStep(std::vector<EvaluatorPtr> evs, MetricExpr keep) : Step("prune", std::move(evs)), keep_(std::move(keep)) {}
  std::string_view kind() const override { return "prune"; }

  DesignSpace apply(const DesignSpace& input, StepContext& ctx) const override {
    DesignSpace space = transform_if_any(input, evaluators(), ctx);
    std::vector<Point> points;
    for (const auto& p : space.points()) {
      auto keep = predicate_value(keep_, space.schema(), p);
      if (!keep) {
        if (ctx.policy.kind == FailPolicy::Kind::Abort) throw EvaluationAborted(keep.error());
        continue;
      }
      if (keep.value()) points.push_back(p);
    }
    return space.with_points(std::move(points));
  }

 private:
  MetricExpr keep_;
};

class ReduceDimensionStep final : public Step {
 public:
  ReduceDimensionStep(std::string concern, bool to_min)
      : Step("reduce_dimension", {}), concern_(std::move(concern)), to_min_(to_min) {}
  std::string_view kind() const override { return "reduce_dimension"; }

  DesignSpace apply(const DesignSpace& input, StepContext& ctx) const override {
    DesignSpace out = project_space(input, concern_, to_min_);
    if (ctx.stats) {
      for (const auto& p : input.schema().params())
        if (!out.schema().index_of(p.name)) ctx.stats->removed_dimensions.push_back(p.name);
      ctx.stats->notes.push_back("cardinality " + std::to_string(input.size()) + " -> " + std::to_string(out.size()));
    }
    return out;
  }

 private:
  std::string concern_;
  bool to_min_;
};

// ---------------------------------------------------------------------------
// Gradient sort

class GradientStep final : public Step {
 public:
  GradientStep(std::vector<EvaluatorPtr> evs, MetricExpr objective, bool maximize)
      : Step("gradient", std::move(evs)), objective_(std::move(objective)), maximize_(maximize) {}
  std::string_view kind() const override { return "gradient"; }

  DesignSpace apply(const DesignSpace& space, StepContext& ctx) const override {
    if (space.empty()) throw Error(ErrorKind::EmptySpace, "gradient sort needs a non-empty space");

    struct Visit {
      std::optional<Point> point;  // empty when pruned by the failure policy
      double objective = 0.0;
    };
    std::unordered_map<std::size_t, Visit> visited;

    auto evaluate = [&](const std::vector<std::size_t>& indices) {
      std::vector<std::size_t> fresh;
      for (auto i : indices)
        if (!visited.count(i)) fresh.push_back(i);
      std::vector<PointOutcome> outcomes(fresh.size());
      parallel_for(fresh.size(), ctx.parallelism, [&](std::size_t j) {
        outcomes[j] = enhance_point(space.schema(), space[fresh[j]], evaluators(), ctx.cache, ctx.policy);
      });
      for (std::size_t j = 0; j < fresh.size(); ++j) {
        auto& o = outcomes[j];
        if (ctx.stats) add(ctx.stats->transform, o.stats);
        if (o.error && ctx.policy.kind == FailPolicy::Kind::Abort) throw EvaluationAborted(*o.error);
        Visit v;
        if (o.point) {
          auto obj = numeric_key(objective_, space.schema(), *o.point);
          if (obj) {
            v.objective = obj.value();
            v.point = std::move(o.point);
          } else if (ctx.policy.kind == FailPolicy::Kind::Abort) {
            throw EvaluationAborted(obj.error());
          }
        }
        visited.emplace(fresh[j], std::move(v));
      }
    };
    auto better = [&](double a, double b) { return maximize_ ? a > b : a < b; };

    std::size_t current = 0;
    evaluate({current});
    if (!visited.at(current).point) {
      if (ctx.stats) {
        ctx.stats->points_visited = visited.size();
        ctx.stats->notes.push_back("start point failed evaluation");
      }
      return space.with_points({});
    }
    double cost = visited.at(current).objective;
    std::size_t moves = 0;
    while (true) {
      auto nb = neighbours(space, current, Norm::L1, 1);
      evaluate(nb);
      std::optional<std::size_t> best;
      for (auto i : nb) {
        const auto& v = visited.at(i);
        if (!v.point) continue;
        if (!best || better(v.objective, visited.at(*best).objective)) best = i;
      }
      if (best && better(visited.at(*best).objective, cost)) {
        current = *best;
        cost = visited.at(current).objective;
        ++moves;
      } else {
        break;
      }
    }

    std::vector<std::size_t> order;
    for (const auto& [i, v] : visited)
      if (v.point) order.push_back(i);
    std::sort(order.begin(), order.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return better(visited.at(a).objective, visited.at(b).objective);
    });
    std::vector<Point> points;
    for (auto i : order) points.push_back(*visited.at(i).point);
    if (ctx.stats) {
      ctx.stats->points_visited = visited.size();
      ctx.stats->notes.push_back("moves " + std::to_string(moves));
    }
    return space.with_points(std::move(points));
  }

 private:
  MetricExpr objective_;
  bool maximize_;
};

// ---------------------------------------------------------------------------
// Quick pruning

class QuickPruneStep final : public Step {
 public:
  explicit QuickPruneStep(QuickPruneOptions opts) : Step("quick_prune", opts.evaluators), opts_(std::move(opts)) {}
  std::string_view kind() const override { return "quick_prune"; }

  DesignSpace apply(const DesignSpace& input, StepContext& ctx) const override {
    if (input.empty()) return input;
    DesignSpace grid = opts_.concern ? project_space(input, *opts_.concern, true) : input;
    std::vector<std::optional<Point>> enhanced;
    QuickPruneTrace trace = quick_prune_trace(grid, opts_, ctx, &enhanced);

    std::vector<bool> kept(grid.size(), false);
    for (auto i : trace.kept) kept[i] = true;
    // Points whose evaluation failed under PruneFailed never survive.
    std::vector<bool> failed(grid.size(), false);
    for (auto i : trace.evaluated)
      if (!enhanced[i]) failed[i] = true;

    std::vector<Point> points;
    if (!opts_.concern) {
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (kept[i] && !failed[i]) points.push_back(enhanced[i] ? *enhanced[i] : grid[i]);
      return grid.with_points(std::move(points));
    }

    // Re-expand onto the input schema.
    const Schema& in_schema = input.schema();
    const Schema& g_schema = grid.schema();
    std::vector<std::size_t> dims;
    for (const auto& p : g_schema.params()) dims.push_back(*in_schema.index_of(p.name));
    std::vector<NamedMetric> demoted;
    for (std::size_t k = 0; k < in_schema.size(); ++k)
      if (!g_schema.index_of(in_schema[k].name))
        demoted.push_back({in_schema[k].name, static_cast<double>(in_schema[k].domain.min_value())});

    for (const auto& p : input.points()) {
      Coords c;
      for (auto k : dims) c.push_back(p.coords[k]);
      auto frozen = p.frozen;
      frozen.insert(frozen.end(), demoted.begin(), demoted.end());
      auto gi = grid.index_of(c, frozen);
      if (!gi || !kept[*gi] || failed[*gi]) continue;
      Point q = p;
      if (enhanced[*gi]) {
        const auto& e = *enhanced[*gi];
        q.metrics.insert(q.metrics.end(), e.metrics.begin() + static_cast<std::ptrdiff_t>(grid[*gi].metrics.size()),
                         e.metrics.end());
        q.degraded = q.degraded || e.degraded;
      }
      points.push_back(std::move(q));
    }
    return input.with_points(std::move(points));
  }

 private:
  QuickPruneOptions opts_;
};

}  // namespace

QuickPruneTrace quick_prune_trace(const DesignSpace& grid, const QuickPruneOptions& opts, StepContext& ctx,
                                  std::vector<std::optional<Point>>* enhanced_out) {
  if (!grid.is_full_grid()) throw Error(ErrorKind::NotAFullGrid, "quick prune needs a full grid");
  if (opts.keep.type() != ExprType::Boolean)
    throw Error(ErrorKind::TypeError, "quick prune keep-condition must be a predicate: \"" + opts.keep.text() + "\"");

  const Schema& schema = grid.schema();
  const bool upward = opts.side == KeepSide::UpwardClosed;
  enum class State : std::uint8_t { Unknown, Kept, Pruned };
  std::vector<State> state(grid.size(), State::Unknown);
  std::vector<std::optional<Point>> enhanced(grid.size());

  auto ensure = [&](const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> fresh;
    for (auto i : indices)
      if (state[i] == State::Unknown) fresh.push_back(i);
    std::sort(fresh.begin(), fresh.end());
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
    std::vector<PointOutcome> outcomes(fresh.size());
    parallel_for(fresh.size(), ctx.parallelism, [&](std::size_t j) {
      outcomes[j] = enhance_point(schema, grid[fresh[j]], opts.evaluators, ctx.cache, ctx.policy);
    });
    for (std::size_t j = 0; j < fresh.size(); ++j) {
      auto& o = outcomes[j];
      const std::size_t i = fresh[j];
      if (ctx.stats) add(ctx.stats->transform, o.stats);
      if (o.error && ctx.policy.kind == FailPolicy::Kind::Abort) throw EvaluationAborted(*o.error);
      state[i] = State::Pruned;
      if (!o.point) continue;
      auto keep = predicate_value(opts.keep, schema, *o.point);
      if (!keep) {
        if (ctx.policy.kind == FailPolicy::Kind::Abort) throw EvaluationAborted(keep.error());
        continue;
      }
      if (keep.value()) state[i] = State::Kept;
      enhanced[i] = std::move(o.point);
    }
  };
  auto keep = [&](std::size_t i) { return state[i] == State::Kept; };

  // Neighbour whose state decides isOnFrontier under the declared keep side.
  auto corner = [&](std::size_t i) -> std::optional<std::size_t> {
    Coords c = grid[i].coords;
    bool moved = false;
    for (std::size_t k = 0; k < c.size(); ++k) {
      std::int32_t next = upward ? std::max(c[k] - 1, 0) : std::min(c[k] + 1, schema[k].domain.cardinality() - 1);
      moved = moved || next != c[k];
      c[k] = next;
    }
    if (!moved) return std::nullopt;
    return grid.index_of(c, grid[i].frozen);
  };
  auto probes = [&](std::size_t i) {
    if (opts.probe == FrontierProbe::Full) return neighbours(grid, i, Norm::Linf, 1);
    std::vector<std::size_t> out;
    if (auto c = corner(i)) out.push_back(*c);
    return out;
  };
  // Evaluates the probes of every kept candidate, then answers isOnFrontier.
  auto prepare_frontier_test = [&](const std::vector<std::size_t>& candidates) {
    std::vector<std::size_t> needed;
    for (auto i : candidates)
      if (keep(i))
        for (auto q : probes(i)) needed.push_back(q);
    ensure(needed);
  };
  auto on_frontier = [&](std::size_t i) {
    if (!keep(i)) return false;
    for (auto q : probes(i))
      if (!keep(q)) return true;
    return false;
  };

  QuickPruneTrace trace;

  // Start: first kept point along the diagonal, walked from the pruned side.
  auto diag = diagonal(grid);
  if (!upward) std::reverse(diag.begin(), diag.end());
  for (auto d : diag) {
    ensure({d});
    if (keep(d)) {
      trace.seed = d;
      break;
    }
  }

  if (trace.seed) {
    std::size_t seed = *trace.seed;
    prepare_frontier_test({seed});
    if (!on_frontier(seed)) {
      auto nb = neighbours(grid, seed, Norm::Linf, 1);
      ensure(nb);
      prepare_frontier_test(nb);
      for (auto q : nb)
        if (on_frontier(q)) {
          seed = q;
          break;
        }
      trace.seed = seed;
    }

    // Frontier: breadth-wise expansion through Chebyshev neighbourhoods.
    std::vector<bool> in_frontier(grid.size(), false);
    in_frontier[seed] = true;
    std::vector<std::size_t> currents{seed};
    while (!currents.empty()) {
      std::vector<std::size_t> n;
      for (auto c : currents)
        for (auto q : neighbours(grid, c, Norm::Linf, 1)) n.push_back(q);
      std::sort(n.begin(), n.end());
      n.erase(std::unique(n.begin(), n.end()), n.end());
      ensure(n);
      prepare_frontier_test(n);
      std::vector<std::size_t> found;
      for (auto q : n)
        if (!in_frontier[q] && on_frontier(q)) {
          in_frontier[q] = true;
          found.push_back(q);
        }
      currents = std::move(found);
    }
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (in_frontier[i]) trace.frontier.push_back(i);

    // Update: keep everything on the kept side of some frontier point.
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Coords& p = grid[i].coords;
      bool above = std::any_of(trace.frontier.begin(), trace.frontier.end(), [&](std::size_t f) {
        const Coords& q = grid[f].coords;
        for (std::size_t k = 0; k < p.size(); ++k)
          if (upward ? p[k] < q[k] : p[k] > q[k]) return false;
        return true;
      });
      if (above) trace.kept.push_back(i);
    }
  } else if (ctx.stats) {
    ctx.stats->notes.push_back("NoKeptPoint: no kept point on the diagonal");
  }

  for (std::size_t i = 0; i < grid.size(); ++i)
    if (state[i] != State::Unknown) trace.evaluated.push_back(i);
  if (ctx.stats) {
    ctx.stats->predicate_evaluations += trace.evaluated.size();
    ctx.stats->points_visited += trace.evaluated.size();
    ctx.stats->notes.push_back("frontier size " + std::to_string(trace.frontier.size()));
  }
  if (enhanced_out) *enhanced_out = std::move(enhanced);
  return trace;
}

StepPtr identity_step() { return std::make_shared<IdentityStep>(); }
StepPtr exhaustive_map(std::vector<EvaluatorPtr> evs) { return std::make_shared<MapStep>(std::move(evs)); }
StepPtr exhaustive_sort(std::vector<EvaluatorPtr> evs, MetricExpr key, bool ascending) {
  if (key.type() != ExprType::Number) throw Error(ErrorKind::TypeError, "sort key must be numeric: \"" + key.text() + "\"");
  return std::make_shared<SortStep>(std::move(evs), std::move(key), ascending);
}
StepPtr exhaustive_prune(std::vector<EvaluatorPtr> evs, MetricExpr keep) {
  if (keep.type() != ExprType::Boolean)
    throw Error(ErrorKind::TypeError, "prune keep-condition must be a predicate: \"" + keep.text() + "\"");
  return std::make_shared<PruneStep>(std::move(evs), std::move(keep));
}
StepPtr reduce_dimension(std::string concern, bool to_min) {
  return std::make_shared<ReduceDimensionStep>(std::move(concern), to_min);
}
StepPtr gradient_sort(std::vector<EvaluatorPtr> evs, MetricExpr objective, bool maximize) {
  if (objective.type() != ExprType::Number)
    throw Error(ErrorKind::TypeError, "gradient objective must be numeric: \"" + objective.text() + "\"");
  return std::make_shared<GradientStep>(std::move(evs), std::move(objective), maximize);
}
StepPtr quick_prune(QuickPruneOptions options) {
  if (options.keep.type() != ExprType::Boolean)
    throw Error(ErrorKind::TypeError, "quick prune keep-condition must be a predicate: \"" + options.keep.text() + "\"");
  return std::make_shared<QuickPruneStep>(std::move(options));
}

// ---------------------------------------------------------------------------

PipelineRun run_pipeline(const Pipeline& pipeline, const DesignSpace& space, EvalCache& cache) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  PipelineRun run;
  run.cache_before = cache.stats();
  DesignSpace current = space;
  for (std::size_t s = 0; s < pipeline.steps.size(); ++s) {
    const Step& step = *pipeline.steps[s];
    StepStats stats;
    stats.name = step.name();
    stats.kind = std::string(step.kind());
    stats.input_size = current.size();
    FailPolicy policy = pipeline.policy_override ? *pipeline.policy_override
                                                 : step.fail_policy.value_or(pipeline.default_policy);
    StepContext ctx{cache, pipeline.parallelism, std::move(policy), &stats};
    const auto ts = clock::now();
    try {
      DesignSpace next = step.apply(current, ctx);
      current = std::move(next);
    } catch (const EvaluationAborted& e) {
      run.error = e.what();
      run.eval_error = e.eval_error();
      run.failed_step = s;
    } catch (const Error& e) {
      run.error = e.what();
      run.failed_step = s;
    }
    stats.wall_time_s = std::chrono::duration<double>(clock::now() - ts).count();
    stats.output_size = run.error ? 0 : current.size();
    run.steps.push_back(std::move(stats));
    if (run.error) break;
  }
  run.space = std::move(current);
  run.cache_after = cache.stats();
  run.wall_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  return run;
}

}  // namespace dsex
