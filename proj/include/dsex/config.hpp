#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "dsex/metrics.hpp"
#include "dsex/strategy.hpp"

namespace dsex {

/// Named evaluators. A registry document maps names to records:
///
///   "estim":   { "kind": "model", "model": "models/dummy-estim.json" }
///   "eff":     { "kind": "expr", "formulas": { "eff": "freq_mhz / lut_pct" } }
///   "synth":   { "kind": "command", "argv": ["${self}", "serve-model", "--model", "${dir}/m.json"],
///                "timeout_s": 5, "produces": ["dsp"] }
///   "qos":     { "kind": "bsim_qos", "model_params": { "s0": 100, "mu": 0.05, "sigma": 0.2, "T": 1 } }
///   "latency": { "kind": "bsim_latency", "overhead": 0 }
///
/// Relative model paths and `${dir}` resolve against the registry file's
/// directory; `${self}` is the running dsex executable.
struct RegistryOptions {
  std::uint64_t global_seed = 42;
  std::string self_exe;
};

class Registry {
 public:
  void add(EvaluatorPtr ev);
  EvaluatorPtr get(const std::string& name) const;
  const std::map<std::string, EvaluatorPtr>& all() const noexcept { return evaluators_; }

 private:
  std::map<std::string, EvaluatorPtr> evaluators_;
};

Registry registry_from_json(const nlohmann::ordered_json& doc, const std::filesystem::path& base_dir,
                            const RegistryOptions& options);
Registry load_registry(const std::filesystem::path& path, const RegistryOptions& options);

/// "abort", "prune" or { "assign_worst": { metric: value, ... } }.
FailPolicy fail_policy_from_json(const nlohmann::ordered_json& doc);
nlohmann::ordered_json fail_policy_to_json(const FailPolicy& policy);

/// Pipeline documents:
///
///   { "parallelism": 4, "fail_policy": "abort",
///     "steps": [ { "step": "prune", "evaluators": ["estim"], "keep": "DSP_estim < 64" },
///                { "step": "sort", "evaluators": ["synth"], "key": "DSP_synth", "ascending": true } ] }
///
/// Step kinds: identity, map, sort, prune, reduce_dimension, gradient,
/// quick_prune. Every step accepts an optional `name` and `fail_policy`.
Pipeline pipeline_from_json(const nlohmann::ordered_json& doc, const Registry& registry);
Pipeline load_pipeline(const std::filesystem::path& path, const Registry& registry);

nlohmann::ordered_json read_json_file(const std::filesystem::path& path);

}  // namespace dsex
