#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dsex/external_command.hpp"
#include "dsex/frame.hpp"
#include "support.hpp"

using namespace dsex;
namespace fs = std::filesystem;

namespace {

ProcessResult dsex_cli(std::vector<std::string> args) {
  args.insert(args.begin(), testing::dsex_exe());
  return run_process(args, {}, 120.0);
}

struct ScratchCleanup {
  ~ScratchCleanup() {
    std::error_code ec;
    fs::remove_all(fs::temp_directory_path() / ("dsex-cli-" + std::to_string(::getpid())), ec);
  }
} scratch_cleanup;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dsex-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> run_args(const std::string& config, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"run", "--manifest", testing::config(config + "/manifest.json").string(), "--out",
                                out.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::string table_rows(const std::string& table) {
  // Drops the header and rule so row sets can be compared.
  auto second = table.find('\n', table.find('\n') + 1);
  return table.substr(second + 1);
}

}  // namespace

TEST_CASE("space command") {
  auto dummy = testing::fixture("schemas/dummy.json").string();
  auto r = dsex_cli({"space", "--schema", dummy});
  CHECK(r.exit_code == 0);
  CHECK(r.out == "full: 459, resource: 153, qos: 51\n");

  auto list = dsex_cli({"space", "--schema", dummy, "--concern", "qos", "--list"});
  CHECK(list.exit_code == 0);
  std::istringstream lines(list.out);
  std::string first, header, row1;
  std::getline(lines, first);
  std::getline(lines, header);
  std::getline(lines, row1);
  CHECK(first == "full: 459, qos: 51");
  CHECK(header == "param1,param3,param2,degraded");
  CHECK(row1 == "0,4,1,0");

  auto dir = scratch("space");
  spit(dir / "one.json", R"({"params": [{"name": "k", "domain": {"linear": [3, 3]}}]})");
  auto one = dsex_cli({"space", "--schema", (dir / "one.json").string()});
  CHECK(one.out == "full: 1\n");

  auto unknown = dsex_cli({"space", "--schema", dummy, "--concern", "power"});
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.err.find("NoSuchConcern") != std::string::npos);

  spit(dir / "bad.json", R"({"params": [{"name": "k", "domain": {"linear": [3, 1]}}]})");
  auto bad = dsex_cli({"space", "--schema", (dir / "bad.json").string()});
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("params[0]") != std::string::npos);

  spit(dir / "broken.json", "{\"params\": [");
  CHECK(dsex_cli({"space", "--schema", (dir / "broken.json").string()}).exit_code == 2);
  CHECK(dsex_cli({"space"}).exit_code == 2);
}

TEST_CASE("dsp pipeline: top row is the minimal DSP_synth among estimates under 64") {
  auto out = scratch("dsp");
  auto r = dsex_cli(run_args("dsp-pipeline", out));
  REQUIRE(r.exit_code == 0);

  // Oracle straight from the fixture formulas.
  double best = 1e300;
  std::vector<double> best_params;
  for (int p1 = 0; p1 <= 16; ++p1)
    for (int e = 0; e <= 8; ++e)
      for (int p3 : {4, 6, 9}) {
        const double p2 = double(1 << e);
        if (!(p1 * p2 / 8 < 64)) continue;
        const double synth = p1 * p2 / 8 + p3 - 4;
        if (synth < best) {
          best = synth;
          best_params = {double(p1), p2, double(p3)};
        }
      }
  auto frame = ResultFrame::from_csv(slurp(out / "frame.csv"));
  REQUIRE(frame.size() > 0);
  const auto& top = frame.rows()[0];
  CHECK(top.cells[0] == best_params[0]);
  CHECK(top.cells[1] == best_params[1]);
  CHECK(top.cells[2] == best_params[2]);
  CHECK(top.cells[*frame.column_index("DSP_synth")] == best);
  CHECK(fs::exists(out / "frame.jsonl"));
  CHECK(fs::exists(out / "provenance.json"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(r.out.find("Rank") == 0);
}

TEST_CASE("identity pipeline keeps every point, parameters only") {
  auto dir = scratch("identity");
  spit(dir / "pipeline.json", R"({"steps": [{"step": "identity"}]})");
  spit(dir / "evaluators.json", "{}");
  auto r = dsex_cli({"run", "--schema", testing::fixture("schemas/dummy.json").string(), "--pipeline",
                     (dir / "pipeline.json").string(), "--evaluators", (dir / "evaluators.json").string(), "--out",
                     (dir / "out").string()});
  REQUIRE(r.exit_code == 0);
  auto frame = ResultFrame::from_csv(slurp(dir / "out" / "frame.csv"));
  CHECK(frame.size() == 459);
  CHECK(frame.columns().size() == 3);
}

TEST_CASE("exit codes") {
  auto dir = scratch("codes");
  auto schema = testing::fixture("schemas/dummy.json").string();
  spit(dir / "evaluators.json", R"j({"bad": {"kind": "expr", "formulas": {"r": "1 / (param1 - 3)"}}})j");
  spit(dir / "map.json", R"({"steps": [{"step": "map", "evaluators": ["bad"]}]})");
  spit(dir / "none.json", R"({"steps": [{"step": "prune", "keep": "param1 > 100"}]})");
  auto base = [&](const char* pipeline, const char* out) {
    return std::vector<std::string>{"run", "--schema", schema, "--pipeline", (dir / pipeline).string(), "--evaluators",
                                    (dir / "evaluators.json").string(), "--out", (dir / out).string()};
  };

  auto aborted = dsex_cli(base("map.json", "a"));
  CHECK(aborted.exit_code == 1);
  CHECK(aborted.err.find("DivByZero") != std::string::npos);
  CHECK(fs::exists(dir / "a" / "provenance.json"));
  CHECK_FALSE(fs::exists(dir / "a" / "frame.csv"));
  auto prov = nlohmann::json::parse(slurp(dir / "a" / "provenance.json"));
  CHECK(prov["error"]["kind"] == "DivByZero");

  auto args = base("map.json", "p");
  args.insert(args.end(), {"--fail-policy", "prune"});
  auto pruned = dsex_cli(args);
  CHECK(pruned.exit_code == 0);
  CHECK(ResultFrame::from_csv(slurp(dir / "p" / "frame.csv")).size() == 459 - 27);

  auto worst = base("map.json", "w");
  worst.insert(worst.end(), {"--fail-policy", R"({"assign_worst": {"r": -1}})"});
  CHECK(dsex_cli(worst).exit_code == 0);
  CHECK(slurp(dir / "w" / "frame.csv").find(",-1,1\n") != std::string::npos);

  CHECK(dsex_cli(base("none.json", "n")).exit_code == 3);

  spit(dir / "typo.json", R"({"steps": [{"step": "prune", "keep": "param1 >"}]})");
  auto syntax = dsex_cli(base("typo.json", "t"));
  CHECK(syntax.exit_code == 2);
  CHECK(syntax.err.find("steps[0].keep") != std::string::npos);
  CHECK(dsex_cli({"run", "--schema", schema}).exit_code == 2);
}

TEST_CASE("reproducible frames") {
  auto a = scratch("repro-a"), b = scratch("repro-b");
  REQUIRE(dsex_cli(run_args("gradient-synth", a)).exit_code == 0);
  REQUIRE(dsex_cli(run_args("gradient-synth", b)).exit_code == 0);
  CHECK(slurp(a / "frame.csv") == slurp(b / "frame.csv"));
  CHECK(slurp(a / "frame.jsonl") == slurp(b / "frame.jsonl"));
}

TEST_CASE("blackscholes columns follow accumulation order") {
  auto out = scratch("bs");
  auto r = dsex_cli(run_args("blackscholes", out));
  REQUIRE(r.exit_code == 0);
  auto header = slurp(out / "frame.csv").substr(0, slurp(out / "frame.csv").find('\n'));
  CHECK(header ==
        "dynamic,precision,nbCore,nbIteration,nbEuler,error,latency_cycles,dsp_pct,lut_pct,freq_mhz,throughput,degraded");

  auto kept = dsex_cli({"report", "--frame", (out / "frame.csv").string(), "--keep", "error <= 0.05", "--top", "1000"});
  CHECK(kept.exit_code == 0);
  auto top5 = dsex_cli({"report", "--frame", (out / "frame.jsonl").string(), "--sort", "throughput", "--descending"});
  CHECK(top5.exit_code == 0);
  std::istringstream lines(table_rows(top5.out));
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 5);

  auto missing = dsex_cli({"report", "--frame", (out / "frame.csv").string(), "--sort", "nonsense"});
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("NameNotFound") != std::string::npos);
}

TEST_CASE("report sort matches an in-pipeline sort") {
  auto dir = scratch("report");
  auto evaluators = testing::config("dsp-pipeline/evaluators.json").string();
  auto schema = testing::fixture("schemas/dummy.json").string();
  spit(dir / "base.json", R"({"steps": [
    {"step": "prune", "evaluators": ["estim"], "keep": "DSP_estim < 64"},
    {"step": "map", "evaluators": ["synth"]}]})");
  spit(dir / "sorted.json", R"({"steps": [
    {"step": "prune", "evaluators": ["estim"], "keep": "DSP_estim < 64"},
    {"step": "map", "evaluators": ["synth"]},
    {"step": "sort", "key": "freq_mhz / lut_pct", "ascending": false}]})");
  auto run = [&](const char* pipeline, const char* out) {
    return dsex_cli({"run", "--schema", schema, "--pipeline", (dir / pipeline).string(), "--evaluators", evaluators,
                     "--out", (dir / out).string(), "--top", "20"});
  };
  REQUIRE(run("base.json", "base").exit_code == 0);
  auto in_pipeline = run("sorted.json", "sorted");
  REQUIRE(in_pipeline.exit_code == 0);
  auto report = dsex_cli({"report", "--frame", (dir / "base" / "frame.csv").string(), "--sort", "freq_mhz / lut_pct",
                          "--descending", "--top", "20"});
  REQUIRE(report.exit_code == 0);
  CHECK(report.out == in_pipeline.out);

  auto sorted_frame = ResultFrame::from_csv(slurp(dir / "sorted" / "frame.csv"));
  auto offline = ResultFrame::from_csv(slurp(dir / "base" / "frame.csv")).sorted(MetricExpr::parse("freq_mhz / lut_pct"), false);
  CHECK(offline == sorted_frame);
}
