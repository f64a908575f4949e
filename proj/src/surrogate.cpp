#include "dsex/surrogate.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "dsex/external_command.hpp"

namespace dsex {

namespace {

[[noreturn]] void bad_model(const std::string& what) { throw Error(ErrorKind::ConfigError, "model: " + what); }

}  // namespace

ResourceModel model_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) bad_model("document must be an object");
  ResourceModel m;
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) bad_model("name must be a string");
    m.name = it->get<std::string>();
  }
  auto formulas = doc.find("formulas");
  if (formulas == doc.end() || !formulas->is_object() || formulas->empty())
    bad_model("formulas must be a non-empty object");
  for (const auto& [metric, text] : formulas->items()) {
    if (!text.is_string()) bad_model("formulas." + metric + " must be a string");
    m.formulas.emplace_back(metric, text.get<std::string>());
  }
  if (auto it = doc.find("produces"); it != doc.end()) {
    if (!it->is_array()) bad_model("produces must be an array");
    for (const auto& p : *it) {
      if (!p.is_string()) bad_model("produces entries must be strings");
      m.produces.push_back(p.get<std::string>());
    }
  } else {
    for (const auto& f : m.formulas) m.produces.push_back(f.first);
  }
  auto number = [&](const char* key, double& field) {
    if (auto it = doc.find(key); it != doc.end()) {
      if (!it->is_number() || it->get<double>() < 0) bad_model(std::string(key) + " must be a non-negative number");
      field = it->get<double>();
    }
  };
  number("latency_s", m.latency_s);
  number("timeout_sleep_s", m.timeout_sleep_s);
  if (auto it = doc.find("fail_if"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) bad_model("fail_if must be a string");
    m.fail_if = it->get<std::string>();
  }
  ModelEvaluator check(m);  // rejects bad formulas and names up front
  return m;
}

nlohmann::ordered_json model_to_json(const ResourceModel& model) {
  nlohmann::ordered_json doc;
  doc["name"] = model.name;
  doc["produces"] = model.produces;
  nlohmann::ordered_json formulas = nlohmann::ordered_json::object();
  for (const auto& [metric, text] : model.formulas) formulas[metric] = text;
  doc["formulas"] = formulas;
  doc["latency_s"] = model.latency_s;
  if (model.fail_if) doc["fail_if"] = *model.fail_if;
  doc["timeout_sleep_s"] = model.timeout_sleep_s;
  return doc;
}

ResourceModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open model file " + path.string());
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  ResourceModel m = model_from_json(doc);
  if (m.name.empty()) m.name = path.stem().string();
  return m;
}

ModelEvaluator::ModelEvaluator(ResourceModel model)
    : Evaluator(model.name.empty() ? "model" : model.name, model.produces), model_(std::move(model)) {
  for (const auto& [metric, text] : model_.formulas) {
    if (!is_identifier(metric)) bad_model("invalid metric name '" + metric + "'");
    exprs_.push_back(parse_numeric(text));
  }
  for (const auto& p : model_.produces) {
    std::size_t i = 0;
    while (i < model_.formulas.size() && model_.formulas[i].first != p) ++i;
    if (i == model_.formulas.size()) bad_model("'" + p + "' is produced but has no formula");
    output_index_.push_back(i);
  }
  if (model_.fail_if) fail_if_ = parse_predicate(*model_.fail_if);
}

std::vector<std::string> ModelEvaluator::inputs() const {
  std::vector<std::string> out;
  auto add = [&](const MetricExpr& e, std::size_t defined) {
    for (const auto& n : e.names()) {
      bool local = false;
      for (std::size_t i = 0; i < defined; ++i) local = local || model_.formulas[i].first == n;
      if (!local && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
  };
  if (fail_if_) add(*fail_if_, 0);
  for (std::size_t i = 0; i < exprs_.size(); ++i) add(exprs_[i], i);
  return out;
}

Result<MetricValues> ModelEvaluator::compute(const Scope& scope) const {
  if (fail_if_) {
    auto hit = fail_if_->test(scope);
    if (!hit) return hit.error();
    if (hit.value()) return EvalError{EvalErrorKind::Timeout, name() + ": simulated tool did not finish", {}, 0};
  }
  MapScope produced({});
  ChainScope chained(produced, scope);
  std::vector<double> all;
  for (std::size_t i = 0; i < exprs_.size(); ++i) {
    auto v = exprs_[i].evaluate(chained);
    if (!v) return v.error();
    all.push_back(v.value());
    produced.set(model_.formulas[i].first, v.value());
  }
  MetricValues out;
  for (auto i : output_index_) out.push_back(all[i]);
  return out;
}

Result<MetricValues> ModelEvaluator::evaluate(const Schema& schema, const Point& point) const {
  if (model_.latency_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(model_.latency_s));
  return compute(PointScope(schema, point));
}

EvaluatorPtr model_evaluator(ResourceModel model) { return std::make_shared<ModelEvaluator>(std::move(model)); }

namespace {

class EnvScope final : public Scope {
 public:
  explicit EnvScope(const std::function<const char*(const char*)>& getenv) : getenv_(getenv) {}
  std::optional<double> lookup(std::string_view name) const override {
    const char* raw = getenv_(env_name(name).c_str());
    if (!raw) return std::nullopt;
    std::string_view text(raw);
    double v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
    return v;
  }

 private:
  const std::function<const char*(const char*)>& getenv_;
};

}  // namespace

int serve_model(const ResourceModel& model, std::ostream& out, std::ostream& err,
                const std::function<const char*(const char*)>& getenv) {
  const ModelEvaluator ev(model);
  EnvScope scope(getenv);
  for (const auto& name : ev.inputs()) {
    if (!scope.lookup(name)) {
      err << "missing or malformed " << env_name(name) << "\n";
      return 1;
    }
  }
  auto r = ev.compute(scope);
  if (!r) {
    if (r.error().kind == EvalErrorKind::Timeout) {
      std::this_thread::sleep_for(std::chrono::duration<double>(model.timeout_sleep_s));
      err << "gave up\n";
      return 1;
    }
    err << r.error().describe() << "\n";
    return 2;
  }
  std::ostringstream line;
  line << '{';
  for (std::size_t i = 0; i < model.produces.size(); ++i) {
    if (i) line << ", ";
    line << '"' << model.produces[i] << "\": " << format_number(r.value()[i]);
  }
  line << "}\n";
  out << line.str();
  out.flush();
  return 0;
}

}  // namespace dsex
