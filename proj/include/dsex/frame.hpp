#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsex/expr.hpp"
#include "dsex/space.hpp"
#include "dsex/strategy.hpp"

namespace dsex {

enum class ColumnKind { Param, Frozen, Metric };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Metric;
  friend bool operator==(const Column&, const Column&) = default;
};

struct FrameRow {
  std::vector<std::optional<double>> cells;  // one per column, empty when the point lacks it
  bool degraded = false;
  friend bool operator==(const FrameRow&, const FrameRow&) = default;
};

/// Tabular view of a space: parameters (schema order), frozen parameters
/// (demotion order), metrics (first appearance), one row per point.
class ResultFrame {
 public:
  ResultFrame() = default;
  ResultFrame(std::vector<Column> columns, std::vector<FrameRow> rows);

  static ResultFrame from_space(const DesignSpace& space);

  const std::vector<Column>& columns() const noexcept { return columns_; }
  const std::vector<FrameRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::optional<std::size_t> column_index(std::string_view name) const;

  /// Header then one line per row; numbers in shortest round-trip form,
  /// missing cells empty, a trailing `degraded` column of 0/1.
  std::string to_csv() const;
  /// One JSON object per row with `params`, `frozen`, `metrics`, `degraded`.
  std::string to_jsonl() const;

  /// Reads a CSV written by to_csv. Column kinds are unknown in CSV, so
  /// `kinds` (by name) may supply them; anything else becomes a metric.
  static ResultFrame from_csv(const std::string& text, const std::vector<Column>& kinds = {});
  static ResultFrame from_jsonl(const std::string& text);

  /// Rows where `keep` holds; rows lacking a referenced column are dropped.
  /// Throws Error(NameNotFound) for names that are not columns at all.
  ResultFrame filter(const MetricExpr& keep) const;
  /// Stable sort by `key`; rows lacking a referenced column go last.
  ResultFrame sorted(const MetricExpr& key, bool ascending) const;
  ResultFrame head(std::size_t n) const;

  /// Rank | Parameters | metrics..., values cut (not rounded) to `decimals` places.
  std::string render_table(std::size_t top, int decimals = 2) const;

  friend bool operator==(const ResultFrame&, const ResultFrame&) = default;

 private:
  void check_names(const MetricExpr& expr) const;

  std::vector<Column> columns_;
  std::vector<FrameRow> rows_;
};

/// Shortest round-trip decimal form of v.
std::string shortest(double v);

/// Per-step counters, cache statistics, timing and the failure, if any.
nlohmann::ordered_json provenance_json(const PipelineRun& run);

}  // namespace dsex
