#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dsex/config.hpp"
#include "dsex/frame.hpp"
#include "dsex/schema_io.hpp"
#include "dsex/strategy.hpp"
#include "dsex/surrogate.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kEvalFailure = 1;
constexpr int kConfigError = 2;
constexpr int kEmptySpace = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_st("dsex");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("DSEX_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dsex::Error(dsex::ErrorKind::ConfigError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dsex::Error(dsex::ErrorKind::ConfigError, "cannot write " + path.string());
  out << text;
}

std::vector<std::string> concerns_of(const dsex::Schema& schema) {
  std::vector<std::string> out;
  for (const auto& p : schema.params())
    for (const auto& c : p.concerns)
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------

struct SpaceArgs {
  std::string schema;
  std::string concern;
  bool list = false;
};

int cmd_space(const SpaceArgs& a) {
  dsex::Schema schema = dsex::load_schema(a.schema);
  dsex::DesignSpace full = dsex::build_space(schema);
  std::vector<std::string> concerns = a.concern.empty() ? concerns_of(schema) : std::vector<std::string>{a.concern};
  std::ostringstream line;
  line << "full: " << full.size();
  std::optional<dsex::DesignSpace> projected;
  for (const auto& c : concerns) {
    dsex::DesignSpace p = dsex::project_space(full, c, true);
    line << ", " << c << ": " << p.size();
    if (!a.concern.empty()) projected = std::move(p);
  }
  std::cout << line.str() << "\n";
  if (a.list) {
    const dsex::DesignSpace& shown = projected ? *projected : full;
    std::cout << dsex::ResultFrame::from_space(shown).to_csv();
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string manifest;
  std::string schema, pipeline, evaluators, out;
  std::optional<int> parallelism;
  std::optional<std::uint64_t> seed;
  std::string fail_policy;
  std::size_t top = 5;
};

void merge_manifest(RunArgs& a) {
  if (a.manifest.empty()) return;
  const fs::path path = a.manifest;
  ojson m = dsex::read_json_file(path);
  auto rel = [&](const char* key, std::string& field) {
    if (field.empty() && m.contains(key)) {
      fs::path p = m.at(key).get<std::string>();
      field = (p.is_absolute() ? p : path.parent_path() / p).string();
    }
  };
  rel("schema", a.schema);
  rel("pipeline", a.pipeline);
  rel("evaluators", a.evaluators);
  rel("out", a.out);
  if (!a.parallelism && m.contains("parallelism")) a.parallelism = m.at("parallelism").get<int>();
  if (!a.seed && m.contains("seed")) a.seed = m.at("seed").get<std::uint64_t>();
  if (a.fail_policy.empty() && m.contains("fail_policy")) a.fail_policy = m.at("fail_policy").dump();
}

dsex::FailPolicy parse_policy_flag(const std::string& text) {
  if (text == "abort" || text == "prune") return dsex::fail_policy_from_json(ojson(text));
  try {
    return dsex::fail_policy_from_json(ojson::parse(text));
  } catch (const nlohmann::json::parse_error&) {
    throw dsex::Error(dsex::ErrorKind::ConfigError, "--fail-policy: expected abort, prune or JSON, got '" + text + "'");
  }
}

int cmd_run(RunArgs a) {
  merge_manifest(a);
  for (auto [flag, value] : {std::pair{"--schema", &a.schema}, std::pair{"--pipeline", &a.pipeline},
                             std::pair{"--evaluators", &a.evaluators}, std::pair{"--out", &a.out}})
    if (value->empty()) throw dsex::Error(dsex::ErrorKind::ConfigError, std::string(flag) + " is required");

  dsex::RegistryOptions ropts;
  ropts.global_seed = a.seed.value_or(42);
  std::error_code ec;
  ropts.self_exe = fs::read_symlink("/proc/self/exe", ec).string();

  dsex::Schema schema = dsex::load_schema(a.schema);
  dsex::Registry registry = dsex::load_registry(a.evaluators, ropts);
  dsex::Pipeline pipeline = dsex::load_pipeline(a.pipeline, registry);
  if (a.parallelism) {
    if (*a.parallelism < 1) throw dsex::Error(dsex::ErrorKind::ConfigError, "--parallelism must be positive");
    pipeline.parallelism = *a.parallelism;
  }
  if (!a.fail_policy.empty()) pipeline.policy_override = parse_policy_flag(a.fail_policy);

  fs::create_directories(a.out);
  ojson manifest;
  manifest["schema"] = fs::absolute(a.schema).string();
  manifest["pipeline"] = fs::absolute(a.pipeline).string();
  manifest["evaluators"] = fs::absolute(a.evaluators).string();
  manifest["out"] = fs::absolute(a.out).string();
  manifest["parallelism"] = pipeline.parallelism;
  manifest["seed"] = ropts.global_seed;
  if (pipeline.policy_override) manifest["fail_policy"] = dsex::fail_policy_to_json(*pipeline.policy_override);
  manifest["top"] = a.top;
  write_file(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");

  dsex::DesignSpace space = dsex::build_space(schema);
  spdlog::info("space: {} points", space.size());
  dsex::EvalCache cache;
  dsex::PipelineRun run = dsex::run_pipeline(pipeline, space, cache);
  for (const auto& s : run.steps)
    spdlog::info("step {} ({}): {} -> {} points, {} invocations, {} cache hits, {:.3f} s", s.name, s.kind, s.input_size,
                 s.output_size, s.transform.invocations, s.transform.cache_hits, s.wall_time_s);

  dsex::ResultFrame frame = dsex::ResultFrame::from_space(run.space);
  ojson prov = dsex::provenance_json(run);
  ojson cols = ojson::array();
  for (const auto& c : frame.columns())
    cols.push_back({{"name", c.name},
                    {"kind", c.kind == dsex::ColumnKind::Param    ? "param"
                             : c.kind == dsex::ColumnKind::Frozen ? "frozen"
                                                                  : "metric"}});
  prov["columns"] = cols;
  write_file(fs::path(a.out) / "provenance.json", prov.dump(2) + "\n");

  if (run.error) {
    std::cerr << "error in step " << (run.failed_step ? *run.failed_step : 0) << ": " << *run.error << "\n";
    return run.eval_error ? kEvalFailure : kConfigError;
  }
  write_file(fs::path(a.out) / "frame.csv", frame.to_csv());
  write_file(fs::path(a.out) / "frame.jsonl", frame.to_jsonl());
  std::cout << frame.render_table(a.top);
  if (frame.size() == 0) {
    std::cerr << "the final space is empty\n";
    return kEmptySpace;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string frame;
  std::string sort, keep;
  bool descending = false;
  std::size_t top = 5;
};

int cmd_report(const ReportArgs& a) {
  const fs::path path = a.frame;
  const std::string text = read_file(path);
  dsex::ResultFrame frame;
  if (path.extension() == ".jsonl") {
    frame = dsex::ResultFrame::from_jsonl(text);
  } else {
    std::vector<dsex::Column> kinds;
    const fs::path prov = path.parent_path() / "provenance.json";
    if (fs::exists(prov)) {
      ojson doc = dsex::read_json_file(prov);
      if (doc.contains("columns"))
        for (const auto& c : doc.at("columns")) {
          auto kind = c.at("kind").get<std::string>();
          kinds.push_back({c.at("name").get<std::string>(), kind == "param"    ? dsex::ColumnKind::Param
                                                            : kind == "frozen" ? dsex::ColumnKind::Frozen
                                                                               : dsex::ColumnKind::Metric});
        }
    }
    frame = dsex::ResultFrame::from_csv(text, kinds);
  }
  if (!a.keep.empty()) frame = frame.filter(dsex::MetricExpr::parse(a.keep));
  if (!a.sort.empty()) frame = frame.sorted(dsex::parse_numeric(a.sort), !a.descending);
  std::cout << frame.render_table(a.top);
  return kOk;
}

int cmd_serve_model(const std::string& model_path) {
  dsex::ResourceModel model = dsex::load_model(model_path);
  return dsex::serve_model(model, std::cout, std::cerr, [](const char* name) { return std::getenv(name); });
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"dsex: design space exploration pipelines"};
  app.require_subcommand(1);

  SpaceArgs space_args;
  auto* space = app.add_subcommand("space", "Print space cardinalities, optionally list points");
  space->add_option("--schema", space_args.schema, "Schema JSON")->required();
  space->add_option("--concern", space_args.concern, "Only this concern projection");
  space->add_flag("--list", space_args.list, "Enumerate points in row-major order");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a pipeline and export the result frame");
  run->add_option("--manifest", run_args.manifest, "Run manifest JSON (flags override it)");
  run->add_option("--schema", run_args.schema, "Schema JSON");
  run->add_option("--pipeline", run_args.pipeline, "Pipeline JSON");
  run->add_option("--evaluators", run_args.evaluators, "Evaluator registry JSON");
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--parallelism", run_args.parallelism, "Concurrent evaluations per step");
  run->add_option("--seed", run_args.seed, "Global seed (default 42)");
  run->add_option("--fail-policy", run_args.fail_policy, "abort, prune or {\"assign_worst\": {...}} for every step");
  run->add_option("--top", run_args.top, "Rows in the printed table");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Filter and sort a saved frame");
  report->add_option("--frame", report_args.frame, "frame.csv or frame.jsonl")->required();
  report->add_option("--sort", report_args.sort, "Sort key expression");
  report->add_flag("--descending", report_args.descending, "Sort largest first");
  report->add_option("--keep", report_args.keep, "Keep-condition expression");
  report->add_option("--top", report_args.top, "Rows to show");

  std::string model_path;
  auto* serve = app.add_subcommand("serve-model", "Evaluate a surrogate model from DSEX_* variables");
  serve->add_option("--model", model_path, "Model JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*space) return cmd_space(space_args);
    if (*run) return cmd_run(run_args);
    if (*report) return cmd_report(report_args);
    if (*serve) return cmd_serve_model(model_path);
  } catch (const dsex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}
