#include "dsex/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <limits>
#include <sstream>

namespace dsex {

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

// Cuts the shortest fixed-notation form after `decimals` places, the way the
// published tables print (247.56 / 0.77 shows as 321.50).
std::string truncated(double v, int decimals) {
  char buf[400];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    if (decimals == 0) return s;
    s += '.';
    dot = s.size() - 1;
  }
  if (decimals == 0) return s.substr(0, dot);
  s.resize(std::min(s.size(), dot + 1 + static_cast<std::size_t>(decimals)));
  s.append(dot + 1 + static_cast<std::size_t>(decimals) - s.size(), '0');
  return s;
}

}  // namespace

ResultFrame::ResultFrame(std::vector<Column> columns, std::vector<FrameRow> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {
  for (const auto& r : rows_)
    if (r.cells.size() != columns_.size()) throw Error(ErrorKind::ConfigError, "frame row width mismatch");
}

ResultFrame ResultFrame::from_space(const DesignSpace& space) {
  const Schema& schema = space.schema();
  std::vector<Column> cols;
  for (const auto& p : schema.params()) cols.push_back({p.name, ColumnKind::Param});
  auto add_names = [&](ColumnKind kind, auto member) {
    for (const auto& p : space.points())
      for (const auto& m : p.*member)
        if (std::none_of(cols.begin(), cols.end(), [&](const Column& c) { return c.name == m.name; }))
          cols.push_back({m.name, kind});
  };
  add_names(ColumnKind::Frozen, &Point::frozen);
  add_names(ColumnKind::Metric, &Point::metrics);

  ResultFrame frame;
  frame.columns_ = cols;
  for (const auto& p : space.points()) {
    FrameRow row;
    row.degraded = p.degraded;
    row.cells.resize(cols.size());
    for (std::size_t k = 0; k < schema.size(); ++k) row.cells[k] = static_cast<double>(space.raw_value(p, k));
    for (std::size_t c = schema.size(); c < cols.size(); ++c) {
      const NamedMetric* m =
          cols[c].kind == ColumnKind::Frozen ? p.find_frozen(cols[c].name) : p.find_metric(cols[c].name);
      if (m) row.cells[c] = m->value;
    }
    frame.rows_.push_back(std::move(row));
  }
  return frame;
}

std::optional<std::size_t> ResultFrame::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

std::string ResultFrame::to_csv() const {
  std::string out;
  for (const auto& c : columns_) {
    out += c.name;
    out += ',';
  }
  out += "degraded\n";
  for (const auto& r : rows_) {
    for (const auto& cell : r.cells) {
      if (cell) out += shortest(*cell);
      out += ',';
    }
    out += r.degraded ? "1\n" : "0\n";
  }
  return out;
}

namespace {

nlohmann::ordered_json number(double v) {
  if (v == static_cast<double>(static_cast<std::int64_t>(v)) && std::abs(v) < 9007199254740992.0)
    return static_cast<std::int64_t>(v);
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

class RowScope final : public Scope {
 public:
  RowScope(const std::vector<Column>& cols, const FrameRow& row) : cols_(cols), row_(row) {}
  std::optional<double> lookup(std::string_view name) const override {
    for (std::size_t i = 0; i < cols_.size(); ++i)
      if (cols_[i].name == name) return row_.cells[i];
    return std::nullopt;
  }

 private:
  const std::vector<Column>& cols_;
  const FrameRow& row_;
};

}  // namespace

std::string ResultFrame::to_jsonl() const {
  std::string out;
  for (const auto& r : rows_) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    nlohmann::ordered_json frozen = nlohmann::ordered_json::object();
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (!r.cells[i]) continue;
      auto& target = columns_[i].kind == ColumnKind::Param    ? params
                     : columns_[i].kind == ColumnKind::Frozen ? frozen
                                                              : metrics;
      target[columns_[i].name] = number(*r.cells[i]);
    }
    nlohmann::ordered_json line;
    line["params"] = std::move(params);
    line["frozen"] = std::move(frozen);
    line["metrics"] = std::move(metrics);
    line["degraded"] = r.degraded;
    out += line.dump();
    out += '\n';
  }
  return out;
}

ResultFrame ResultFrame::from_csv(const std::string& text, const std::vector<Column>& kinds) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ConfigError, "empty frame file");
  auto header = split(line, ',');
  if (header.empty() || header.back() != "degraded") throw Error(ErrorKind::ConfigError, "frame header lacks 'degraded'");
  ResultFrame frame;
  for (std::size_t i = 0; i + 1 < header.size(); ++i) {
    Column c{std::string(header[i]), ColumnKind::Metric};
    for (const auto& k : kinds)
      if (k.name == c.name) c.kind = k.kind;
    frame.columns_.push_back(std::move(c));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != header.size())
      throw Error(ErrorKind::ConfigError, "frame line " + std::to_string(line_no) + " has the wrong field count");
    FrameRow row;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      if (fields[i].empty()) {
        row.cells.emplace_back();
        continue;
      }
      double v = 0;
      auto res = std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
      if (res.ec != std::errc() || res.ptr != fields[i].data() + fields[i].size())
        throw Error(ErrorKind::ConfigError, "frame line " + std::to_string(line_no) + ": bad number '" +
                                                std::string(fields[i]) + "'");
      row.cells.emplace_back(v);
    }
    row.degraded = fields.back() == "1";
    frame.rows_.push_back(std::move(row));
  }
  return frame;
}

ResultFrame ResultFrame::from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<nlohmann::ordered_json> docs;
  ResultFrame frame;
  auto add_col = [&](const std::string& name, ColumnKind kind) {
    if (!frame.column_index(name)) frame.columns_.push_back({name, kind});
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      docs.push_back(nlohmann::ordered_json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ConfigError, std::string("frame: ") + e.what());
    }
    const auto& d = docs.back();
    for (auto [key, kind] : {std::pair{"params", ColumnKind::Param}, std::pair{"frozen", ColumnKind::Frozen},
                             std::pair{"metrics", ColumnKind::Metric}})
      if (d.contains(key))
        for (const auto& [name, v] : d.at(key).items()) add_col(name, kind);
  }
  // Keep the canonical column grouping regardless of first appearance.
  std::stable_sort(frame.columns_.begin(), frame.columns_.end(),
                   [](const Column& a, const Column& b) { return a.kind < b.kind; });
  for (const auto& d : docs) {
    FrameRow row;
    row.cells.resize(frame.columns_.size());
    for (std::size_t i = 0; i < frame.columns_.size(); ++i) {
      const char* key = frame.columns_[i].kind == ColumnKind::Param    ? "params"
                        : frame.columns_[i].kind == ColumnKind::Frozen ? "frozen"
                                                                       : "metrics";
      if (d.contains(key) && d.at(key).contains(frame.columns_[i].name))
        row.cells[i] = d.at(key).at(frame.columns_[i].name).get<double>();
    }
    row.degraded = d.value("degraded", false);
    frame.rows_.push_back(std::move(row));
  }
  return frame;
}

void ResultFrame::check_names(const MetricExpr& expr) const {
  for (const auto& n : expr.names())
    if (!column_index(n)) throw Error(ErrorKind::NameNotFound, "no column '" + n + "' in frame");
}

ResultFrame ResultFrame::filter(const MetricExpr& keep) const {
  if (keep.type() != ExprType::Boolean) throw Error(ErrorKind::TypeError, "keep must be a predicate: \"" + keep.text() + "\"");
  check_names(keep);
  ResultFrame out;
  out.columns_ = columns_;
  for (const auto& r : rows_) {
    auto v = keep.test(RowScope(columns_, r));
    if (v && v.value()) out.rows_.push_back(r);
  }
  return out;
}

ResultFrame ResultFrame::sorted(const MetricExpr& key, bool ascending) const {
  check_names(key);
  std::vector<std::pair<std::optional<double>, std::size_t>> keyed;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    auto v = key.evaluate(RowScope(columns_, rows_[i]));
    keyed.emplace_back(v ? std::optional<double>(v.value()) : std::nullopt, i);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (!a.first || !b.first) return a.first.has_value() && !b.first.has_value();
    return ascending ? *a.first < *b.first : *a.first > *b.first;
  });
  ResultFrame out;
  out.columns_ = columns_;
  for (const auto& [k, i] : keyed) out.rows_.push_back(rows_[i]);
  return out;
}

ResultFrame ResultFrame::head(std::size_t n) const {
  ResultFrame out;
  out.columns_ = columns_;
  out.rows_.assign(rows_.begin(), rows_.begin() + static_cast<std::ptrdiff_t>(std::min(n, rows_.size())));
  return out;
}

std::string ResultFrame::render_table(std::size_t top, int decimals) const {
  std::vector<std::string> header{"Rank"};
  bool has_params = false;
  for (const auto& c : columns_) has_params = has_params || c.kind != ColumnKind::Metric;
  if (has_params) {
    std::string names = "Parameters [";
    bool first = true;
    for (const auto& c : columns_)
      if (c.kind != ColumnKind::Metric) {
        names += (first ? "" : ", ") + c.name;
        first = false;
      }
    header.push_back(names + "]");
  }
  for (const auto& c : columns_)
    if (c.kind == ColumnKind::Metric) header.push_back(c.name);

  std::vector<std::vector<std::string>> body;
  bool any_degraded = false;
  for (std::size_t r = 0; r < std::min(top, rows_.size()); ++r) {
    const auto& row = rows_[r];
    std::vector<std::string> line{std::to_string(r + 1) + (row.degraded ? "*" : "")};
    any_degraded = any_degraded || row.degraded;
    if (has_params) {
      std::string params = "[";
      bool first = true;
      for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].kind != ColumnKind::Metric) {
          params += (first ? "" : ", ") + (row.cells[i] ? shortest(*row.cells[i]) : std::string("-"));
          first = false;
        }
      line.push_back(params + "]");
    }
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].kind == ColumnKind::Metric) {
        if (!row.cells[i]) {
          line.push_back("-");
          continue;
        }
        line.push_back(truncated(*row.cells[i], decimals));
      }
    body.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += " | ";
      const std::size_t pad = width[c] - cells[c].size();
      // Numbers right-aligned, text left-aligned.
      if (c >= (has_params ? 2u : 1u)) out += std::string(pad, ' ') + cells[c];
      else out += cells[c] + std::string(pad, ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  };
  emit(header);
  std::string rule;
  for (std::size_t c = 0; c < width.size(); ++c) {
    if (c) rule += "-+-";
    rule += std::string(width[c], '-');
  }
  out += rule + '\n';
  for (const auto& line : body) emit(line);
  if (any_degraded) out += "* degraded: a failed evaluation was replaced by its worst value\n";
  return out;
}

nlohmann::ordered_json provenance_json(const PipelineRun& run) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : run.steps) {
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["kind"] = s.kind;
    j["input_size"] = s.input_size;
    j["output_size"] = s.output_size;
    j["invocations"] = s.transform.invocations;
    j["cache_hits"] = s.transform.cache_hits;
    j["failures"] = s.transform.failures;
    j["points_evaluated"] = s.transform.points_evaluated;
    j["points_visited"] = s.points_visited;
    if (s.kind == "quick_prune") j["predicate_evaluations"] = s.predicate_evaluations;
    if (!s.removed_dimensions.empty()) j["removed_dimensions"] = s.removed_dimensions;
    if (!s.notes.empty()) j["notes"] = s.notes;
    j["wall_time_s"] = s.wall_time_s;
    steps.push_back(std::move(j));
  }
  doc["steps"] = std::move(steps);
  doc["cache"] = {{"hits", run.cache_after.hits - run.cache_before.hits},
                  {"misses", run.cache_after.misses - run.cache_before.misses}};
  doc["output_size"] = run.space.size();
  doc["wall_time_s"] = run.wall_time_s;
  if (run.error) {
    nlohmann::ordered_json err;
    err["message"] = *run.error;
    if (run.failed_step) err["step"] = *run.failed_step;
    if (run.eval_error) {
      err["kind"] = std::string(to_string(run.eval_error->kind));
      err["coords"] = run.eval_error->coords;
      err["exit_code"] = run.eval_error->exit_code;
    }
    doc["error"] = std::move(err);
  }
  return doc;
}

}  // namespace dsex
