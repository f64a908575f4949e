#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsex/metrics.hpp"

namespace dsex {

/// Launch description for a tool that reports metrics as a flat JSON
/// object (name -> number) on stdout and exits 0 on success.
///
/// `{name}` in argv or env values is replaced by the point's value for that
/// parameter, frozen parameter or metric. Braces around anything that is not
/// an identifier are left alone, so literal JSON survives. Every parameter
/// and frozen parameter is also exported as DSEX_<NAME>=<raw value>, NAME
/// upper-cased.
struct CommandSpec {
  std::string name;
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;
  double timeout_s = 60.0;
  std::vector<std::string> produces;
  bool nondeterministic = false;
};

class ExternalCommandEvaluator final : public Evaluator {
 public:
  explicit ExternalCommandEvaluator(CommandSpec spec);
  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override;

  /// The argv and extra environment a point would be launched with.
  Result<std::vector<std::string>> render_argv(const Schema& schema, const Point& point) const;
  Result<std::vector<std::string>> render_env(const Schema& schema, const Point& point) const;

  const CommandSpec& spec() const noexcept { return spec_; }

 private:
  CommandSpec spec_;
};

EvaluatorPtr external_command(CommandSpec spec);

/// Parses the tool protocol: a JSON object mapping names to numbers.
Result<MetricValues> parse_metric_object(const std::string& text, const std::vector<std::string>& produces);

/// Renders a value the way the tool protocol does: integral values without
/// a fraction, everything else in shortest round-trip form.
std::string format_number(double v);

/// Environment variable name for a parameter (DSEX_ + upper-cased name).
std::string env_name(std::string_view param);

struct ProcessResult {
  bool timed_out = false;
  bool spawn_failed = false;
  int exit_code = 0;
  std::string out;
  std::string err;
};

/// Runs argv with `extra_env` appended to the inherited environment. The
/// child gets its own process group, which is killed on timeout.
ProcessResult run_process(const std::vector<std::string>& argv, const std::vector<std::string>& extra_env,
                          double timeout_s);

}  // namespace dsex
