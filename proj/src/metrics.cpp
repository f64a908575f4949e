#include "dsex/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <thread>

namespace dsex {

Evaluator::Evaluator(std::string name, std::vector<std::string> produces, bool nondeterministic)
    : name_(std::move(name)), produces_(std::move(produces)), nondeterministic_(nondeterministic) {
  if (name_.empty()) throw Error(ErrorKind::ConfigError, "evaluator needs a name");
  if (produces_.empty()) throw Error(ErrorKind::ConfigError, "evaluator '" + name_ + "' produces nothing");
  for (std::size_t i = 0; i < produces_.size(); ++i) {
    if (!is_identifier(produces_[i]))
      throw Error(ErrorKind::ConfigError, "evaluator '" + name_ + "': invalid metric name '" + produces_[i] + "'");
    for (std::size_t j = 0; j < i; ++j)
      if (produces_[i] == produces_[j])
        throw Error(ErrorKind::NameCollision, "evaluator '" + name_ + "' produces '" + produces_[i] + "' twice");
  }
}

namespace {

std::vector<std::string> first_of(const std::vector<std::pair<std::string, std::string>>& formulas) {
  std::vector<std::string> out;
  for (const auto& f : formulas) out.push_back(f.first);
  return out;
}

}  // namespace

ExprEvaluator::ExprEvaluator(std::string name, std::vector<std::pair<std::string, std::string>> formulas)
    : Evaluator(std::move(name), first_of(formulas)) {
  for (const auto& [metric, text] : formulas) exprs_.push_back(parse_numeric(text));
}

Result<MetricValues> ExprEvaluator::evaluate(const Schema& schema, const Point& point) const {
  MetricValues out;
  PointScope base(schema, point);
  MapScope produced({});
  ChainScope scope(produced, base);
  for (std::size_t i = 0; i < exprs_.size(); ++i) {
    auto v = exprs_[i].evaluate(scope);
    if (!v) return v.error();
    out.push_back(v.value());
    produced.set(produces()[i], v.value());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cache

std::string EvalCache::key(const Evaluator& ev, const Schema& schema, const Point& point) {
  std::vector<std::pair<std::string_view, double>> config;
  for (std::size_t k = 0; k < schema.size(); ++k)
    config.emplace_back(schema[k].name, static_cast<double>(schema[k].domain.value_at(point.coords[k])));
  for (const auto& f : point.frozen) config.emplace_back(f.name, f.value);
  std::sort(config.begin(), config.end());
  std::string key = ev.name();
  char buf[32];
  for (const auto& [name, value] : config) {
    key += '|';
    key += name;
    key += '=';
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    key.append(buf, res.ptr);
  }
  return key;
}

EvalCache::Lookup EvalCache::get_or_compute(const Evaluator& ev, const Schema& schema, const Point& point) {
  const std::string k = key(ev, schema, point);
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(k); it != entries_.end()) {
      ++hits_;
      return {it->second, false};
    }
  }
  Result<MetricValues> fresh = ev.evaluate(schema, point);
  if (!fresh) {
    EvalError e = fresh.error();
    e.coords = point.coords;
    fresh = std::move(e);
  }
  ++misses_;
  std::lock_guard lock(mu_);
  auto [it, inserted] = entries_.try_emplace(k, std::move(fresh));
  return {it->second, true};
}

std::size_t EvalCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Transform application

std::string_view to_string(FailPolicy::Kind kind) {
  switch (kind) {
    case FailPolicy::Kind::Abort: return "abort";
    case FailPolicy::Kind::PruneFailed: return "prune";
    case FailPolicy::Kind::AssignWorst: return "assign_worst";
  }
  return "unknown";
}

PointOutcome enhance_point(const Schema& schema, const Point& point, std::span<const EvaluatorPtr> evaluators,
                           EvalCache& cache, const FailPolicy& policy) {
  PointOutcome out;
  Point p = point;
  bool fresh = false;
  for (const auto& ev : evaluators) {
    for (const auto& name : ev->produces())
      if (schema.index_of(name) || p.find_frozen(name) || p.find_metric(name))
        throw Error(ErrorKind::NameCollision, "evaluator '" + ev->name() + "' would overwrite '" + name + "'");

    auto [result, computed] = cache.get_or_compute(*ev, schema, p);
    if (computed) {
      ++out.stats.invocations;
      fresh = true;
    } else {
      ++out.stats.cache_hits;
    }

    std::optional<EvalError> failure;
    if (!result) {
      failure = result.error();
    } else if (result.value().size() != ev->arity()) {
      failure = EvalError{EvalErrorKind::ParseFailure,
                          "evaluator '" + ev->name() + "' returned " + std::to_string(result.value().size()) +
                              " values, expected " + std::to_string(ev->arity()),
                          p.coords, 0};
    } else if (!std::all_of(result.value().begin(), result.value().end(), [](double v) { return std::isfinite(v); })) {
      failure = EvalError{EvalErrorKind::NonFinite, "evaluator '" + ev->name() + "' returned a non-finite value",
                          p.coords, 0};
    }

    if (!failure) {
      for (std::size_t i = 0; i < ev->arity(); ++i) p.metrics.push_back({ev->produces()[i], result.value()[i]});
      continue;
    }

    ++out.stats.failures;
    if (!out.error) out.error = failure;
    switch (policy.kind) {
      case FailPolicy::Kind::Abort:
      case FailPolicy::Kind::PruneFailed:
        out.stats.points_evaluated = fresh ? 1 : 0;
        return out;
      case FailPolicy::Kind::AssignWorst:
        for (const auto& name : ev->produces()) {
          auto it = policy.worst.find(name);
          if (it == policy.worst.end())
            throw Error(ErrorKind::ConfigError, "assign_worst has no worst value for metric '" + name + "'");
          p.metrics.push_back({name, it->second});
        }
        p.degraded = true;
        break;
    }
  }
  out.stats.points_evaluated = fresh ? 1 : 0;
  out.point = std::move(p);
  return out;
}

void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_index = n;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (i < first_index) {
              first_index = i;
              first_error = std::current_exception();
            }
          }
        }
      });
  }
  if (first_error) std::rethrow_exception(first_error);
}

DesignSpace apply_transform(const DesignSpace& space, std::span<const EvaluatorPtr> evaluators, EvalCache& cache,
                            const FailPolicy& policy, int parallelism, TransformStats* stats) {
  std::vector<PointOutcome> outcomes(space.size());
  parallel_for(space.size(), parallelism, [&](std::size_t i) {
    outcomes[i] = enhance_point(space.schema(), space[i], evaluators, cache, policy);
  });

  TransformStats total;
  std::vector<Point> points;
  points.reserve(space.size());
  for (auto& o : outcomes) {
    total.invocations += o.stats.invocations;
    total.cache_hits += o.stats.cache_hits;
    total.failures += o.stats.failures;
    total.points_evaluated += o.stats.points_evaluated;
    if (o.error && policy.kind == FailPolicy::Kind::Abort) {
      if (stats) *stats = total;
      throw EvaluationAborted(*o.error);
    }
    if (o.point) points.push_back(std::move(*o.point));
  }
  if (stats) *stats = total;
  return space.with_points(std::move(points));
}

}  // namespace dsex
