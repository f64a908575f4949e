#include "dsex/schema_io.hpp"

#include <fstream>

#include "dsex/error.hpp"

namespace dsex {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::InvalidSchema, path + ": " + msg);
}

std::int64_t integer_at(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

ParamDomain domain_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1) fail(path, "domain must have exactly one of linear/pow2/enum");
  const std::string kind = j.begin().key();
  const json& args = j.begin().value();
  if (!args.is_array()) fail(path + "." + kind, "expected an array");
  if (kind == "linear" || kind == "pow2") {
    if (args.size() != 2) fail(path + "." + kind, "expected [lo, hi]");
    auto lo = integer_at(args[0], path + "." + kind + "[0]");
    auto hi = integer_at(args[1], path + "." + kind + "[1]");
    if (kind == "linear") return ParamDomain::linear(lo, hi);
    return ParamDomain::pow2(static_cast<int>(lo), static_cast<int>(hi));
  }
  if (kind == "enum") {
    std::vector<std::int64_t> values;
    for (std::size_t i = 0; i < args.size(); ++i)
      values.push_back(integer_at(args[i], path + ".enum[" + std::to_string(i) + "]"));
    return ParamDomain::enumeration(std::move(values));
  }
  fail(path, "unknown domain kind '" + kind + "'");
}

}  // namespace

Schema schema_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("params") || !doc["params"].is_array())
    fail("$", "expected an object with a 'params' array");
  std::vector<ParamSpec> params;
  const auto& list = doc["params"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "params[" + std::to_string(i) + "]";
    const auto& p = list[i];
    if (!p.is_object()) fail(path, "expected an object");
    if (!p.contains("name") || !p["name"].is_string()) fail(path + ".name", "expected a string");
    if (!p.contains("domain")) fail(path + ".domain", "missing");
    std::vector<std::string> concerns;
    if (p.contains("concerns")) {
      if (!p["concerns"].is_array()) fail(path + ".concerns", "expected an array of strings");
      for (const auto& c : p["concerns"]) {
        if (!c.is_string()) fail(path + ".concerns", "expected an array of strings");
        concerns.push_back(c.get<std::string>());
      }
    }
    try {
      params.push_back(ParamSpec{p["name"].get<std::string>(), domain_from_json(p["domain"], path + ".domain"),
                                 std::move(concerns)});
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidSchema && std::string(e.what()).find(path) == std::string::npos)
        fail(path, e.what());
      throw;
    }
  }
  return Schema(std::move(params));
}

json schema_to_json(const Schema& schema) {
  json params = json::array();
  for (const auto& p : schema.params()) {
    json domain;
    switch (p.domain.kind()) {
      case ParamDomain::Kind::Linear: domain["linear"] = {p.domain.lo(), p.domain.hi()}; break;
      case ParamDomain::Kind::Pow2: domain["pow2"] = {p.domain.lo(), p.domain.hi()}; break;
      case ParamDomain::Kind::Enum: domain["enum"] = p.domain.values(); break;
    }
    params.push_back({{"name", p.name}, {"domain", domain}, {"concerns", p.concerns}});
  }
  return {{"params", params}};
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidSchema, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidSchema, path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return schema_from_json(doc);
}

}  // namespace dsex
