#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dsex/space.hpp"

namespace dsex {

/// Schema documents look like
///
///   { "name": "DummyModule",
///     "params": [ { "name": "param1", "domain": { "linear": [0, 16] },
///                   "concerns": ["resource", "qos"] }, ... ] }
///
/// `name` at the top level is optional. Domains are exactly one of
/// `linear: [lo, hi]`, `pow2: [loExp, hiExp]` or `enum: [v, ...]`.
/// Errors are reported as Error(InvalidSchema) with a JSON path.
Schema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const Schema& schema);

Schema load_schema(const std::filesystem::path& path);

}  // namespace dsex
