#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dsex/frame.hpp"
#include "dsex/schema_io.hpp"
#include "support.hpp"

using namespace dsex;

namespace {

DesignSpace small_space() {
  Schema s({{"a", ParamDomain::linear(1, 3), {"r"}}, {"b", ParamDomain::pow2(0, 1), {"q"}}});
  std::vector<Point> pts;
  pts.push_back({{0, 0}, {{"z", 4}}, {{"m", 0.1}, {"n", 2}}, false});
  pts.push_back({{2, 1}, {{"z", 4}}, {{"m", -1.5e-7}, {"n", 3}}, true});
  pts.push_back({{1, 0}, {{"z", 4}}, {{"m", 321.50649350649354}}, false});
  return DesignSpace(s, pts);
}

}  // namespace

TEST_CASE("columns: parameters, frozen, metrics by first appearance") {
  auto f = ResultFrame::from_space(small_space());
  std::vector<Column> expected{{"a", ColumnKind::Param}, {"b", ColumnKind::Param}, {"z", ColumnKind::Frozen},
                               {"m", ColumnKind::Metric}, {"n", ColumnKind::Metric}};
  CHECK(f.columns() == expected);
  REQUIRE(f.size() == 3);
  CHECK(f.rows()[1].cells[0] == 3.0);  // raw value, not the coordinate
  CHECK(f.rows()[1].cells[1] == 2.0);
  CHECK_FALSE(f.rows()[2].cells[4].has_value());
  CHECK(f.rows()[1].degraded);
}

TEST_CASE("csv") {
  auto f = ResultFrame::from_space(small_space());
  std::string csv = f.to_csv();
  CHECK(csv ==
        "a,b,z,m,n,degraded\n"
        "1,1,4,0.1,2,0\n"
        "3,2,4,-1.5e-07,3,1\n"
        "2,1,4,321.50649350649354,,0\n");
  auto back = ResultFrame::from_csv(csv, f.columns());
  CHECK(back == f);
  auto untyped = ResultFrame::from_csv(csv);
  CHECK(untyped.columns()[0].kind == ColumnKind::Metric);
  CHECK(untyped.rows() == f.rows());
  CHECK_THROWS_AS(ResultFrame::from_csv("a,b\n1,2\n"), Error);
}

TEST_CASE("jsonl") {
  auto f = ResultFrame::from_space(small_space());
  std::string text = f.to_jsonl();
  CHECK(text.substr(0, text.find('\n')) ==
        R"({"params":{"a":1,"b":1},"frozen":{"z":4},"metrics":{"m":0.1,"n":2},"degraded":false})");
  CHECK(ResultFrame::from_jsonl(text) == f);
}

TEST_CASE("property: csv and jsonl round-trip random frames exactly") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> val(-1e6, 1e6);
  for (int trial = 0; trial < 30; ++trial) {
    DesignSpace space = build_space(testing::grid_schema({int(rng() % 4) + 1, int(rng() % 4) + 1}));
    std::vector<Point> pts;
    for (auto p : space.points()) {
      p.metrics = {{"u", val(rng)}, {"v", std::ldexp(val(rng), -int(rng() % 60))}, {"w", double(rng() % 100)}};
      p.degraded = rng() % 5 == 0;
      pts.push_back(p);
    }
    auto f = ResultFrame::from_space(space.with_points(pts));
    CHECK(ResultFrame::from_csv(f.to_csv(), f.columns()) == f);
    CHECK(ResultFrame::from_jsonl(f.to_jsonl()) == f);
  }
}

TEST_CASE("filter, sort and head") {
  auto f = ResultFrame::from_space(small_space());
  auto kept = f.filter(parse_predicate("m > 0"));
  CHECK(kept.size() == 2);
  auto with_n = f.filter(parse_predicate("n >= 0"));
  CHECK(with_n.size() == 2);  // the row without n is dropped
  CHECK_THROWS_AS(f.filter(parse_predicate("nope > 0")), Error);
  CHECK_THROWS_AS(f.filter(MetricExpr::parse("m + 1")), Error);

  auto by_n = f.sorted(MetricExpr::parse("n"), false);
  CHECK(by_n.rows()[0].cells[4] == 3.0);
  CHECK_FALSE(by_n.rows()[2].cells[4].has_value());  // missing goes last
  auto by_n_asc = f.sorted(MetricExpr::parse("n"), true);
  CHECK_FALSE(by_n_asc.rows()[2].cells[4].has_value());
  auto by_expr = f.sorted(MetricExpr::parse("a * b"), true);
  CHECK(by_expr.rows()[0].cells[0] == 1.0);
  CHECK(f.head(2).size() == 2);
  CHECK(f.head(10).size() == 3);
  CHECK(f.sorted(MetricExpr::parse("1"), true) == f);
}

TEST_CASE("table rendering") {
  auto f = ResultFrame::from_space(small_space());
  std::string t = f.render_table(5);
  CHECK(t.find("Rank") != std::string::npos);
  CHECK(t.find("Parameters [a, b, z]") != std::string::npos);
  CHECK(t.find("321.50") != std::string::npos);  // cut, not rounded
  CHECK(t.find("-0.00") != std::string::npos);
  CHECK(t.find("2*") != std::string::npos);  // degraded marker
  CHECK(t.find("[3, 2, 4]") != std::string::npos);
  std::string one = f.render_table(1);
  CHECK(one.find("321.50") == std::string::npos);
}

TEST_CASE("table cells are cut at the requested decimals") {
  Schema s({{"k", ParamDomain::linear(0, 0), {}}});
  auto cell = [&](double v, int decimals) {
    auto f = ResultFrame::from_space(DesignSpace(s, {Point{{0}, {}, {{"m", v}}, false}}));
    std::string t = f.render_table(1, decimals);
    auto last = t.rfind('|');
    std::string c = t.substr(last + 1);
    c.erase(0, c.find_first_not_of(' '));
    c.erase(c.find_last_not_of(" \n") + 1);
    return c;
  };
  CHECK(cell(0.29, 2) == "0.29");
  CHECK(cell(1.0 / 3, 2) == "0.33");
  CHECK(cell(2.0 / 3, 2) == "0.66");
  CHECK(cell(64, 2) == "64.00");
  CHECK(cell(1.5e-7, 3) == "0.000");
  CHECK(cell(-3.14159, 2) == "-3.14");
  CHECK(cell(138000000, 2) == "138000000.00");
  CHECK(cell(7.9, 0) == "7");
}

TEST_CASE("shortest formatting") {
  CHECK(shortest(0.1) == "0.1");
  CHECK(shortest(64) == "64");
  CHECK(shortest(1e21) == "1e+21");
  CHECK(std::stod(shortest(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("provenance") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  auto ev = testing::coord_evaluator("e", "v", [](const Coords& c) { return c[0]; });
  Pipeline pipe{{exhaustive_map({ev}), reduce_dimension("resource", true)}, 1, FailPolicy::abort(), std::nullopt};
  EvalCache cache;
  auto run = run_pipeline(pipe, build_space(dummy), cache);
  auto doc = provenance_json(run);
  REQUIRE(doc["steps"].size() == 2);
  CHECK(doc["steps"][0]["kind"] == "map");
  CHECK(doc["steps"][0]["invocations"] == 459);
  CHECK(doc["steps"][0]["input_size"] == 459);
  CHECK(doc["steps"][1]["removed_dimensions"] == nlohmann::ordered_json::array({"param3"}));
  CHECK(doc["cache"]["misses"] == 459);
  CHECK(doc["output_size"] == 153);
  CHECK_FALSE(doc.contains("error"));
}
