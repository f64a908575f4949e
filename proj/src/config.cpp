#include "dsex/config.hpp"

#include <fstream>
#include <set>

#include "dsex/bsim.hpp"
#include "dsex/external_command.hpp"
#include "dsex/surrogate.hpp"

namespace dsex {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::ConfigError, where + ": " + what);
}

void check_keys(const ojson& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const auto& [key, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) bad(where, "unknown key '" + key + "'");
  }
}

std::string string_at(const ojson& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) bad(where, std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

double number_or(const ojson& obj, const std::string& where, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) bad(where, std::string("'") + key + "' must be a number");
  return it->get<double>();
}

bool bool_or(const ojson& obj, const std::string& where, const char* key, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) bad(where, std::string("'") + key + "' must be true or false");
  return it->get<bool>();
}

std::vector<std::string> strings_at(const ojson& obj, const std::string& where, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) bad(where, std::string("'") + key + "' must be an array of strings");
  for (const auto& v : *it) {
    if (!v.is_string()) bad(where, std::string("'") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string expand(std::string s, const std::filesystem::path& dir, const RegistryOptions& opts) {
  auto replace_all = [&](const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  };
  replace_all("${dir}", dir.string());
  replace_all("${self}", opts.self_exe);
  return s;
}

MetricExpr expression(const ojson& step, const std::string& where, const char* key) {
  const std::string text = string_at(step, where, key);
  try {
    return MetricExpr::parse(text);
  } catch (const Error& e) {
    std::string msg = e.what();
    msg = msg.substr(msg.find(": ") + 2);
    throw Error(e.kind(), where + "." + key + ": " + msg);
  }
}

}  // namespace

ojson read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
}

void Registry::add(EvaluatorPtr ev) {
  const std::string name = ev->name();
  if (!evaluators_.emplace(name, std::move(ev)).second)
    throw Error(ErrorKind::NameCollision, "evaluator '" + name + "' registered twice");
}

EvaluatorPtr Registry::get(const std::string& name) const {
  auto it = evaluators_.find(name);
  if (it == evaluators_.end()) throw Error(ErrorKind::ConfigError, "unknown evaluator '" + name + "'");
  return it->second;
}

Registry registry_from_json(const ojson& doc, const std::filesystem::path& base_dir, const RegistryOptions& opts) {
  if (!doc.is_object()) bad("evaluators", "document must be an object");
  Registry reg;
  for (const auto& [name, spec] : doc.items()) {
    const std::string where = "evaluators." + name;
    if (!spec.is_object()) bad(where, "must be an object");
    const std::string kind = string_at(spec, where, "kind");
    if (kind == "expr") {
      check_keys(spec, where, {"kind", "formulas"});
      auto it = spec.find("formulas");
      if (it == spec.end() || !it->is_object()) bad(where, "'formulas' must be an object");
      std::vector<std::pair<std::string, std::string>> formulas;
      for (const auto& [metric, text] : it->items()) {
        if (!text.is_string()) bad(where, "formula '" + metric + "' must be a string");
        formulas.emplace_back(metric, text.get<std::string>());
      }
      reg.add(std::make_shared<ExprEvaluator>(name, std::move(formulas)));
    } else if (kind == "model") {
      check_keys(spec, where, {"kind", "model"});
      auto it = spec.find("model");
      if (it == spec.end()) bad(where, "'model' is required");
      ResourceModel m;
      if (it->is_string()) m = load_model(base_dir / expand(it->get<std::string>(), base_dir, opts));
      else m = model_from_json(*it);
      m.name = name;
      reg.add(model_evaluator(std::move(m)));
    } else if (kind == "command") {
      check_keys(spec, where, {"kind", "argv", "env", "timeout_s", "produces", "nondeterministic"});
      CommandSpec cs;
      cs.name = name;
      for (auto& a : strings_at(spec, where, "argv")) cs.argv.push_back(expand(a, base_dir, opts));
      if (auto it = spec.find("env"); it != spec.end()) {
        if (!it->is_object()) bad(where, "'env' must be an object");
        for (const auto& [k, v] : it->items()) {
          if (!v.is_string()) bad(where, "env values must be strings");
          cs.env[k] = expand(v.get<std::string>(), base_dir, opts);
        }
      }
      cs.timeout_s = number_or(spec, where, "timeout_s", cs.timeout_s);
      cs.produces = strings_at(spec, where, "produces");
      cs.nondeterministic = bool_or(spec, where, "nondeterministic", false);
      reg.add(external_command(std::move(cs)));
    } else if (kind == "bsim_qos") {
      check_keys(spec, where, {"kind", "model_params", "diagnostics"});
      bsim::QosOptions q;
      q.name = name;
      q.global_seed = opts.global_seed;
      q.diagnostics = bool_or(spec, where, "diagnostics", false);
      if (auto it = spec.find("model_params"); it != spec.end()) {
        check_keys(*it, where + ".model_params", {"s0", "mu", "sigma", "T"});
        q.model.s0 = number_or(*it, where, "s0", q.model.s0);
        q.model.mu = number_or(*it, where, "mu", q.model.mu);
        q.model.sigma = number_or(*it, where, "sigma", q.model.sigma);
        q.model.T = number_or(*it, where, "T", q.model.T);
      }
      reg.add(bsim::qos_evaluator(std::move(q)));
    } else if (kind == "bsim_latency") {
      check_keys(spec, where, {"kind", "overhead"});
      reg.add(bsim::latency_evaluator(name, static_cast<std::int64_t>(number_or(spec, where, "overhead", 0))));
    } else {
      bad(where, "unknown kind '" + kind + "'");
    }
  }
  return reg;
}

Registry load_registry(const std::filesystem::path& path, const RegistryOptions& options) {
  return registry_from_json(read_json_file(path), path.parent_path(), options);
}

FailPolicy fail_policy_from_json(const ojson& doc) {
  if (doc.is_string()) {
    auto s = doc.get<std::string>();
    if (s == "abort") return FailPolicy::abort();
    if (s == "prune") return FailPolicy::prune_failed();
    bad("fail_policy", "expected \"abort\", \"prune\" or {\"assign_worst\": {...}}, got \"" + s + "\"");
  }
  if (doc.is_object() && doc.size() == 1 && doc.contains("assign_worst") && doc.at("assign_worst").is_object()) {
    std::map<std::string, double> worst;
    for (const auto& [k, v] : doc.at("assign_worst").items()) {
      if (!v.is_number()) bad("fail_policy.assign_worst", "'" + k + "' must be a number");
      worst[k] = v.get<double>();
    }
    return FailPolicy::assign_worst(std::move(worst));
  }
  bad("fail_policy", "expected \"abort\", \"prune\" or {\"assign_worst\": {...}}");
}

ojson fail_policy_to_json(const FailPolicy& policy) {
  switch (policy.kind) {
    case FailPolicy::Kind::Abort: return "abort";
    case FailPolicy::Kind::PruneFailed: return "prune";
    case FailPolicy::Kind::AssignWorst: {
      ojson worst = ojson::object();
      for (const auto& [k, v] : policy.worst) worst[k] = v;
      return ojson{{"assign_worst", worst}};
    }
  }
  return "abort";
}

Pipeline pipeline_from_json(const ojson& doc, const Registry& registry) {
  if (!doc.is_object()) bad("pipeline", "document must be an object");
  check_keys(doc, "pipeline", {"parallelism", "fail_policy", "steps", "description"});
  Pipeline p;
  p.parallelism = static_cast<int>(number_or(doc, "pipeline", "parallelism", 1));
  if (p.parallelism < 1) bad("pipeline", "'parallelism' must be positive");
  if (auto it = doc.find("fail_policy"); it != doc.end()) p.default_policy = fail_policy_from_json(*it);
  auto steps = doc.find("steps");
  if (steps == doc.end() || !steps->is_array() || steps->empty()) bad("pipeline", "'steps' must be a non-empty array");

  for (std::size_t i = 0; i < steps->size(); ++i) {
    const ojson& s = (*steps)[i];
    const std::string where = "steps[" + std::to_string(i) + "]";
    if (!s.is_object()) bad(where, "must be an object");
    const std::string kind = string_at(s, where, "step");
    std::vector<EvaluatorPtr> evs;
    for (const auto& name : strings_at(s, where, "evaluators")) evs.push_back(registry.get(name));

    StepPtr step;
    if (kind == "identity") {
      check_keys(s, where, {"step", "name"});
      step = identity_step();
    } else if (kind == "map") {
      check_keys(s, where, {"step", "name", "evaluators", "fail_policy"});
      step = exhaustive_map(std::move(evs));
    } else if (kind == "sort") {
      check_keys(s, where, {"step", "name", "evaluators", "fail_policy", "key", "ascending"});
      step = exhaustive_sort(std::move(evs), expression(s, where, "key"), bool_or(s, where, "ascending", true));
    } else if (kind == "prune") {
      check_keys(s, where, {"step", "name", "evaluators", "fail_policy", "keep"});
      step = exhaustive_prune(std::move(evs), expression(s, where, "keep"));
    } else if (kind == "reduce_dimension") {
      check_keys(s, where, {"step", "name", "concern", "project_to_min"});
      step = reduce_dimension(string_at(s, where, "concern"), bool_or(s, where, "project_to_min", true));
    } else if (kind == "gradient") {
      check_keys(s, where, {"step", "name", "evaluators", "fail_policy", "objective", "maximize"});
      step = gradient_sort(std::move(evs), expression(s, where, "objective"), bool_or(s, where, "maximize", true));
    } else if (kind == "quick_prune") {
      check_keys(s, where, {"step", "name", "evaluators", "fail_policy", "keep", "keep_side", "concern", "probe"});
      QuickPruneOptions q(expression(s, where, "keep"));
      q.evaluators = std::move(evs);
      if (s.contains("keep_side")) {
        auto side = string_at(s, where, "keep_side");
        if (side == "upward") q.side = KeepSide::UpwardClosed;
        else if (side == "downward") q.side = KeepSide::DownwardClosed;
        else bad(where, "keep_side must be \"upward\" or \"downward\"");
      }
      if (s.contains("concern")) q.concern = string_at(s, where, "concern");
      if (s.contains("probe")) {
        auto probe = string_at(s, where, "probe");
        if (probe == "corner") q.probe = FrontierProbe::Corner;
        else if (probe == "full") q.probe = FrontierProbe::Full;
        else bad(where, "probe must be \"corner\" or \"full\"");
      }
      step = quick_prune(std::move(q));
    } else {
      bad(where, "unknown step '" + kind + "'");
    }
    if (s.contains("name")) {
      // Steps are immutable once built; rename through a thin wrapper.
      struct Named final : Step {
        Named(std::string n, StepPtr inner) : Step(std::move(n), inner->evaluators()), inner_(std::move(inner)) {}
        std::string_view kind() const override { return inner_->kind(); }
        DesignSpace apply(const DesignSpace& in, StepContext& ctx) const override { return inner_->apply(in, ctx); }
        StepPtr inner_;
      };
      step = std::make_shared<Named>(string_at(s, where, "name"), step);
    }
    if (s.contains("fail_policy")) step->fail_policy = fail_policy_from_json(s.at("fail_policy"));
    p.steps.push_back(std::move(step));
  }
  return p;
}

Pipeline load_pipeline(const std::filesystem::path& path, const Registry& registry) {
  return pipeline_from_json(read_json_file(path), registry);
}

}  // namespace dsex
