#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dsex {

/// Identifier rule shared by parameter and metric names:
/// letters, digits, underscore; must not start with a digit.
bool is_identifier(std::string_view name);

struct NamedMetric {
  std::string name;
  double value = 0.0;

  friend bool operator==(const NamedMetric&, const NamedMetric&) = default;
};

/// Integer-valued parameter domain. The enumeration is materialized once;
/// points address it by index.
class ParamDomain {
 public:
  enum class Kind { Linear, Pow2, Enum };

  static ParamDomain linear(std::int64_t lo, std::int64_t hi);
  static ParamDomain pow2(int lo_exp, int hi_exp);
  static ParamDomain enumeration(std::vector<std::int64_t> values);

  Kind kind() const noexcept { return kind_; }
  /// Declared bounds: (lo, hi) for Linear, (loExp, hiExp) for Pow2.
  std::int64_t lo() const noexcept { return lo_; }
  std::int64_t hi() const noexcept { return hi_; }

  const std::vector<std::int64_t>& values() const noexcept { return values_; }
  std::int32_t cardinality() const noexcept { return static_cast<std::int32_t>(values_.size()); }
  std::int64_t value_at(std::int32_t index) const { return values_.at(static_cast<std::size_t>(index)); }
  std::int64_t min_value() const;
  std::int64_t max_value() const;

  friend bool operator==(const ParamDomain& a, const ParamDomain& b) {
    return a.kind_ == b.kind_ && a.values_ == b.values_;
  }

 private:
  ParamDomain(Kind kind, std::int64_t lo, std::int64_t hi, std::vector<std::int64_t> values)
      : kind_(kind), lo_(lo), hi_(hi), values_(std::move(values)) {}

  Kind kind_;
  std::int64_t lo_;
  std::int64_t hi_;
  std::vector<std::int64_t> values_;
};

struct ParamSpec {
  std::string name;
  ParamDomain domain;
  std::vector<std::string> concerns;

  bool has_concern(std::string_view tag) const;
  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

class Schema {
 public:
  Schema() = default;
  /// Throws Error(InvalidSchema) on duplicate or malformed names.
  explicit Schema(std::vector<ParamSpec> params);

  const std::vector<ParamSpec>& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  const ParamSpec& operator[](std::size_t k) const { return params_[k]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Product of domain cardinalities.
  std::uint64_t grid_size() const;

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<ParamSpec> params_;
};

using Coords = std::vector<std::int32_t>;

/// One implementation candidate. Coordinates are indices into the schema
/// domains, never raw values.
struct Point {
  Coords coords;
  std::vector<NamedMetric> frozen;
  std::vector<NamedMetric> metrics;
  bool degraded = false;

  const NamedMetric* find_metric(std::string_view name) const;
  const NamedMetric* find_frozen(std::string_view name) const;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Identity of a point inside a space: coordinates plus frozen parameters.
std::string point_key(const Point& p);

enum class Norm { L1, Linf };

/// Ordered, immutable collection of points sharing a schema.
class DesignSpace {
 public:
  DesignSpace() = default;
  /// Validates conformance and uniqueness; throws Error(InvalidSchema).
  DesignSpace(Schema schema, std::vector<Point> points);

  const Schema& schema() const noexcept { return *schema_; }
  std::shared_ptr<const Schema> schema_ptr() const noexcept { return schema_; }
  const std::vector<Point>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }

  std::optional<std::size_t> index_of(const Point& p) const;
  std::optional<std::size_t> index_of(const Coords& coords, const std::vector<NamedMetric>& frozen) const;

  /// Raw value of parameter k for point p.
  std::int64_t raw_value(const Point& p, std::size_t k) const {
    return schema_->params()[k].domain.value_at(p.coords[k]);
  }

  /// True when every coordinate combination is present exactly once and all
  /// points share the same frozen parameters.
  bool is_full_grid() const;

  /// Same schema, different points (used by steps that reorder or filter).
  DesignSpace with_points(std::vector<Point> points) const;

 private:
  std::shared_ptr<const Schema> schema_ = std::make_shared<Schema>();
  std::vector<Point> points_;
  std::shared_ptr<const std::unordered_map<std::string, std::size_t>> index_;
};

/// Full Cartesian product in row-major order (last parameter fastest).
DesignSpace build_space(const Schema& schema);

/// Keep only the parameters tagged with `concern`; the others are frozen at
/// their domain minimum (or maximum) and duplicates are collapsed, first
/// occurrence wins.
DesignSpace project_space(const DesignSpace& space, std::string_view concern, bool project_to_min);

/// Same as project_space but with an explicit list of parameter names to keep.
DesignSpace project_onto(const DesignSpace& space, const std::vector<std::string>& keep, bool project_to_min);

/// Index-space neighbourhood of p, in enumeration order, p excluded. Only
/// points with the same frozen parameters as p are considered.
std::vector<std::size_t> neighbours(const DesignSpace& space, std::size_t p, Norm norm, int distance);
std::vector<Point> get_neighbours(const DesignSpace& space, const Point& p, Norm norm, int distance);

/// Grid coordinates of the diagonal between the all-min and all-max corners,
/// rounding half up.
std::vector<Coords> diagonal_coords(const Schema& schema);
std::vector<std::size_t> diagonal(const DesignSpace& space);
std::vector<Point> get_diagonal(const DesignSpace& space);

}  // namespace dsex
