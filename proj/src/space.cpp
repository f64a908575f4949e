#include "dsex/space.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <unordered_set>

#include "dsex/error.hpp"

namespace dsex {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSchema: return "InvalidSchema";
    case ErrorKind::NoSuchConcern: return "NoSuchConcern";
    case ErrorKind::AllDimensionsRemoved: return "AllDimensionsRemoved";
    case ErrorKind::PointNotInSpace: return "PointNotInSpace";
    case ErrorKind::NotAFullGrid: return "NotAFullGrid";
    case ErrorKind::EmptySpace: return "EmptySpace";
    case ErrorKind::NameCollision: return "NameCollision";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::TypeError: return "TypeError";
    case ErrorKind::NameNotFound: return "NameNotFound";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::EvaluationAborted: return "EvaluationAborted";
  }
  return "Unknown";
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin(), name.end(), [&](char c) { return alpha(c) || digit(c); });
}

// ---------------------------------------------------------------------------
// Domains

ParamDomain ParamDomain::linear(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw Error(ErrorKind::InvalidSchema, "linear domain requires lo <= hi");
  if (hi - lo >= (std::int64_t{1} << 24)) throw Error(ErrorKind::InvalidSchema, "linear domain too large");
  std::vector<std::int64_t> values(static_cast<std::size_t>(hi - lo + 1));
  std::iota(values.begin(), values.end(), lo);
  return ParamDomain(Kind::Linear, lo, hi, std::move(values));
}

ParamDomain ParamDomain::pow2(int lo_exp, int hi_exp) {
  if (lo_exp < 0 || lo_exp > hi_exp || hi_exp > 62)
    throw Error(ErrorKind::InvalidSchema, "pow2 domain requires 0 <= loExp <= hiExp <= 62");
  std::vector<std::int64_t> values;
  for (int e = lo_exp; e <= hi_exp; ++e) values.push_back(std::int64_t{1} << e);
  return ParamDomain(Kind::Pow2, lo_exp, hi_exp, std::move(values));
}

ParamDomain ParamDomain::enumeration(std::vector<std::int64_t> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidSchema, "enum domain requires at least one value");
  std::unordered_set<std::int64_t> seen;
  for (auto v : values)
    if (!seen.insert(v).second) throw Error(ErrorKind::InvalidSchema, "enum domain has duplicate value " + std::to_string(v));
  return ParamDomain(Kind::Enum, 0, 0, std::move(values));
}

std::int64_t ParamDomain::min_value() const { return *std::min_element(values_.begin(), values_.end()); }
std::int64_t ParamDomain::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

bool ParamSpec::has_concern(std::string_view tag) const {
  return std::find(concerns.begin(), concerns.end(), tag) != concerns.end();
}

// ---------------------------------------------------------------------------
// Schema

Schema::Schema(std::vector<ParamSpec> params) : params_(std::move(params)) {
  std::unordered_set<std::string> names;
  for (const auto& p : params_) {
    if (!is_identifier(p.name)) throw Error(ErrorKind::InvalidSchema, "invalid parameter name '" + p.name + "'");
    if (!names.insert(p.name).second) throw Error(ErrorKind::InvalidSchema, "duplicate parameter name '" + p.name + "'");
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < params_.size(); ++k)
    if (params_[k].name == name) return k;
  return std::nullopt;
}

std::uint64_t Schema::grid_size() const {
  std::uint64_t n = 1;
  for (const auto& p : params_) n *= static_cast<std::uint64_t>(p.domain.cardinality());
  return n;
}

// ---------------------------------------------------------------------------
// Points

namespace {

const NamedMetric* find_in(const std::vector<NamedMetric>& list, std::string_view name) {
  for (const auto& m : list)
    if (m.name == name) return &m;
  return nullptr;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::string make_key(const Coords& coords, const std::vector<NamedMetric>& frozen) {
  std::string key;
  key.reserve(coords.size() * 4 + frozen.size() * 12);
  for (auto c : coords) {
    key += std::to_string(c);
    key += ',';
  }
  for (const auto& f : frozen) {
    key += '|';
    key += f.name;
    key += '=';
    append_number(key, f.value);
  }
  return key;
}

}  // namespace

const NamedMetric* Point::find_metric(std::string_view name) const { return find_in(metrics, name); }
const NamedMetric* Point::find_frozen(std::string_view name) const { return find_in(frozen, name); }

std::string point_key(const Point& p) { return make_key(p.coords, p.frozen); }

// ---------------------------------------------------------------------------
// DesignSpace

DesignSpace::DesignSpace(Schema schema, std::vector<Point> points)
    : schema_(std::make_shared<Schema>(std::move(schema))), points_(std::move(points)) {
  auto index = std::make_shared<std::unordered_map<std::string, std::size_t>>();
  index->reserve(points_.size());
  const auto& params = schema_->params();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Point& p = points_[i];
    if (p.coords.size() != params.size())
      throw Error(ErrorKind::InvalidSchema, "point coordinate count does not match schema");
    for (std::size_t k = 0; k < params.size(); ++k)
      if (p.coords[k] < 0 || p.coords[k] >= params[k].domain.cardinality())
        throw Error(ErrorKind::InvalidSchema, "coordinate out of domain for '" + params[k].name + "'");
    std::unordered_set<std::string_view> names;
    for (const auto& spec : params) names.insert(spec.name);
    for (const auto& f : p.frozen)
      if (!names.insert(f.name).second) throw Error(ErrorKind::NameCollision, "'" + f.name + "' appears twice on a point");
    for (const auto& m : p.metrics)
      if (!names.insert(m.name).second) throw Error(ErrorKind::NameCollision, "'" + m.name + "' appears twice on a point");
    if (!index->emplace(point_key(p), i).second)
      throw Error(ErrorKind::InvalidSchema, "duplicate point " + point_key(p));
  }
  index_ = std::move(index);
}

DesignSpace DesignSpace::with_points(std::vector<Point> points) const { return DesignSpace(*schema_, std::move(points)); }

std::optional<std::size_t> DesignSpace::index_of(const Coords& coords, const std::vector<NamedMetric>& frozen) const {
  if (!index_) return std::nullopt;
  auto it = index_->find(make_key(coords, frozen));
  if (it == index_->end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> DesignSpace::index_of(const Point& p) const { return index_of(p.coords, p.frozen); }

bool DesignSpace::is_full_grid() const {
  if (points_.empty() || points_.size() != schema_->grid_size()) return false;
  const auto& frozen = points_.front().frozen;
  return std::all_of(points_.begin(), points_.end(), [&](const Point& p) { return p.frozen == frozen; });
}

// ---------------------------------------------------------------------------
// Construction and projection

DesignSpace build_space(const Schema& schema) {
  const std::uint64_t total = schema.grid_size();
  std::vector<Point> points;
  points.reserve(static_cast<std::size_t>(total));
  Coords coords(schema.size(), 0);
  for (std::uint64_t n = 0; n < total; ++n) {
    points.push_back(Point{coords, {}, {}, false});
    for (std::size_t k = schema.size(); k-- > 0;) {
      if (++coords[k] < schema[k].domain.cardinality()) break;
      coords[k] = 0;
    }
  }
  return DesignSpace(schema, std::move(points));
}

DesignSpace project_onto(const DesignSpace& space, const std::vector<std::string>& keep, bool project_to_min) {
  const Schema& schema = space.schema();
  std::vector<std::size_t> kept, removed;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    bool keep_it = std::find(keep.begin(), keep.end(), schema[k].name) != keep.end();
    (keep_it ? kept : removed).push_back(k);
  }
  if (kept.empty()) throw Error(ErrorKind::AllDimensionsRemoved, "projection would remove every parameter");

  std::vector<ParamSpec> params;
  for (auto k : kept) params.push_back(schema[k]);
  std::vector<NamedMetric> demoted;
  for (auto k : removed) {
    const auto& d = schema[k].domain;
    demoted.push_back({schema[k].name, static_cast<double>(project_to_min ? d.min_value() : d.max_value())});
  }

  std::vector<Point> points;
  std::unordered_set<std::string> seen;
  for (const Point& p : space.points()) {
    Point q;
    q.coords.reserve(kept.size());
    for (auto k : kept) q.coords.push_back(p.coords[k]);
    q.frozen = p.frozen;
    q.frozen.insert(q.frozen.end(), demoted.begin(), demoted.end());
    if (!seen.insert(point_key(q)).second) continue;
    q.metrics = p.metrics;
    q.degraded = p.degraded;
    points.push_back(std::move(q));
  }
  return DesignSpace(Schema(std::move(params)), std::move(points));
}

DesignSpace project_space(const DesignSpace& space, std::string_view concern, bool project_to_min) {
  std::vector<std::string> keep;
  for (const auto& p : space.schema().params())
    if (p.has_concern(concern)) keep.push_back(p.name);
  if (keep.empty()) throw Error(ErrorKind::NoSuchConcern, "no parameter carries concern '" + std::string(concern) + "'");
  return project_onto(space, keep, project_to_min);
}

// ---------------------------------------------------------------------------
// Topology

namespace {

int distance(const Coords& a, const Coords& b, Norm norm) {
  int acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    int d = std::abs(a[k] - b[k]);
    acc = norm == Norm::L1 ? acc + d : std::max(acc, d);
  }
  return acc;
}

}  // namespace

std::vector<std::size_t> neighbours(const DesignSpace& space, std::size_t pi, Norm norm, int dist) {
  const Point& p = space[pi];
  const std::size_t dims = p.coords.size();
  std::vector<std::size_t> out;

  // Enumerating offsets beats scanning when the ball is small relative to the space.
  double ball = 1.0;
  for (std::size_t k = 0; k < dims; ++k) ball *= 2.0 * dist + 1.0;
  if (ball < static_cast<double>(space.size())) {
    Coords offset(dims, -dist), q(dims);
    while (true) {
      bool inside = true;
      for (std::size_t k = 0; k < dims; ++k) {
        q[k] = p.coords[k] + offset[k];
        if (q[k] < 0 || q[k] >= space.schema()[k].domain.cardinality()) inside = false;
      }
      if (inside && q != p.coords && distance(q, p.coords, norm) <= dist)
        if (auto idx = space.index_of(q, p.frozen)) out.push_back(*idx);
      std::size_t k = dims;
      while (k-- > 0) {
        if (++offset[k] <= dist) break;
        offset[k] = -dist;
      }
      if (k == static_cast<std::size_t>(-1)) break;
    }
    std::sort(out.begin(), out.end());
  } else {
    for (std::size_t i = 0; i < space.size(); ++i) {
      if (i == pi || space[i].frozen != p.frozen) continue;
      if (distance(space[i].coords, p.coords, norm) <= dist) out.push_back(i);
    }
  }
  return out;
}

std::vector<Point> get_neighbours(const DesignSpace& space, const Point& p, Norm norm, int dist) {
  auto idx = space.index_of(p);
  if (!idx) throw Error(ErrorKind::PointNotInSpace, point_key(p));
  std::vector<Point> out;
  for (auto i : neighbours(space, *idx, norm, dist)) out.push_back(space[i]);
  return out;
}

std::vector<Coords> diagonal_coords(const Schema& schema) {
  std::int64_t steps = 0;
  for (const auto& p : schema.params()) steps = std::max<std::int64_t>(steps, p.domain.cardinality() - 1);
  std::vector<Coords> out;
  for (std::int64_t t = 0; t <= steps; ++t) {
    Coords c(schema.size(), 0);
    if (steps > 0)
      for (std::size_t k = 0; k < schema.size(); ++k) {
        std::int64_t span = schema[k].domain.cardinality() - 1;
        // round(t * span / steps), half up, in exact integer arithmetic
        c[k] = static_cast<std::int32_t>((2 * t * span + steps) / (2 * steps));
      }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::size_t> diagonal(const DesignSpace& space) {
  if (!space.is_full_grid()) throw Error(ErrorKind::NotAFullGrid, "diagonal requires a full grid");
  const auto& frozen = space[0].frozen;
  std::vector<std::size_t> out;
  for (const auto& c : diagonal_coords(space.schema())) out.push_back(*space.index_of(c, frozen));
  return out;
}

std::vector<Point> get_diagonal(const DesignSpace& space) {
  std::vector<Point> out;
  for (auto i : diagonal(space)) out.push_back(space[i]);
  return out;
}

}  // namespace dsex
