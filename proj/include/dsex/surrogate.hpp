#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsex/metrics.hpp"

namespace dsex {

/// Analytic stand-in for a synthesis or analysis tool.
///
/// Model files are JSON objects:
///
///   { "name": "gemm-synth",
///     "produces": ["freq_mhz", "throughput"],
///     "formulas": { "freq_mhz": "...", "throughput": "freq_mhz * nbCore" },
///     "latency_s": 0,
///     "fail_if": "nbCore >= 6 && matSize >= 32",
///     "timeout_sleep_s": 3600 }
///
/// Formulas run in file order and may use earlier formulas. `produces`
/// defaults to every formula. `fail_if` marks points on which the simulated
/// tool never finishes.
struct ResourceModel {
  std::string name;
  std::vector<std::pair<std::string, std::string>> formulas;
  std::vector<std::string> produces;
  double latency_s = 0.0;
  std::optional<std::string> fail_if;
  double timeout_sleep_s = 3600.0;
};

ResourceModel model_from_json(const nlohmann::ordered_json& doc);
nlohmann::ordered_json model_to_json(const ResourceModel& model);
ResourceModel load_model(const std::filesystem::path& path);

class ModelEvaluator final : public Evaluator {
 public:
  explicit ModelEvaluator(ResourceModel model);

  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override;

  /// Evaluation against an arbitrary scope, without latency simulation.
  /// Returns Timeout when the failure rule holds.
  Result<MetricValues> compute(const Scope& scope) const;

  /// Free names the model reads (not produced by an earlier formula).
  std::vector<std::string> inputs() const;

  const ResourceModel& model() const noexcept { return model_; }

 private:
  ResourceModel model_;
  std::vector<MetricExpr> exprs_;
  std::optional<MetricExpr> fail_if_;
  std::vector<std::size_t> output_index_;
};

EvaluatorPtr model_evaluator(ResourceModel model);

/// Entry point of the stdio tool: reads DSEX_<NAME> variables through
/// `getenv`, prints one metric object line to `out`, returns the exit code
/// (0 ok, 1 missing or malformed input, 2 evaluation failure). When the
/// failure rule holds the call sleeps timeout_sleep_s before returning 1.
int serve_model(const ResourceModel& model, std::ostream& out, std::ostream& err,
                const std::function<const char*(const char*)>& getenv);

}  // namespace dsex
