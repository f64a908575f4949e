#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "dsex/schema_io.hpp"
#include "dsex/strategy.hpp"
#include "support.hpp"

using namespace dsex;
using testing::coord_evaluator;
using testing::grid_schema;

namespace {

struct Runner {
  EvalCache cache;
  StepStats stats;
  int parallelism = 1;
  FailPolicy policy = FailPolicy::abort();

  DesignSpace operator()(const StepPtr& step, const DesignSpace& in) {
    stats = {};
    StepContext ctx{cache, parallelism, policy, &stats};
    return step->apply(in, ctx);
  }
};

std::set<Coords> coord_set(const DesignSpace& s) {
  std::set<Coords> out;
  for (const auto& p : s.points()) out.insert(p.coords);
  return out;
}

std::vector<Coords> all_coords(const std::vector<int>& sizes) {
  std::vector<Coords> out{{}};
  for (int n : sizes) {
    std::vector<Coords> next;
    for (const auto& c : out)
      for (int v = 0; v < n; ++v) {
        Coords d = c;
        d.push_back(v);
        next.push_back(d);
      }
    out = std::move(next);
  }
  return out;
}

EvaluatorPtr keep_flag(const testing::MonotoneInstance& m, std::shared_ptr<std::atomic<int>> calls = nullptr) {
  return coord_evaluator("flag", "keep", [m](const Coords& c) { return m.keep(c) ? 1.0 : 0.0; }, std::move(calls));
}

// Independent replay of the descent: start at index 0, examine L1 neighbours
// in row-major order, move to the first strictly best one.
struct Descent {
  Coords best;
  std::set<Coords> evaluated;
};

Descent replay_descent(const std::vector<int>& sizes, const std::function<double(const Coords&)>& f) {
  Descent d;
  Coords cur(sizes.size(), 0);
  d.evaluated.insert(cur);
  while (true) {
    std::vector<Coords> nb;
    for (const auto& c : all_coords(sizes)) {
      int dist = 0;
      for (std::size_t k = 0; k < c.size(); ++k) dist += std::abs(c[k] - cur[k]);
      if (dist == 1) nb.push_back(c);
    }
    std::optional<Coords> best;
    for (const auto& c : nb) {
      d.evaluated.insert(c);
      if (!best || f(c) > f(*best)) best = c;
    }
    if (best && f(*best) > f(cur)) cur = *best;
    else break;
  }
  d.best = cur;
  return d;
}

}  // namespace

TEST_CASE("exhaustive map") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  DesignSpace space = build_space(dummy);
  Runner run;
  auto out = run(exhaustive_map({coord_evaluator("e", "m", [](const Coords& c) { return c[0]; })}), space);
  CHECK(out.size() == 459);
  CHECK(run.stats.transform.invocations == 459);

  auto empty = space.with_points({});
  auto e = run(exhaustive_map({coord_evaluator("z", "m", [](const Coords&) { return 0; })}), empty);
  CHECK(e.empty());
  CHECK(run.stats.transform.invocations == 0);
}

TEST_CASE("exhaustive prune keeps exactly the predicate's points") {
  Schema s({{"k", ParamDomain::linear(0, 100), {}}});
  DesignSpace space = build_space(s);
  Runner run;
  auto est = std::make_shared<ExprEvaluator>("estim", std::vector<std::pair<std::string, std::string>>{{"DSP_estim", "2 * k"}});
  auto out = run(exhaustive_prune({est}, parse_predicate("DSP_estim < 128")), space);
  CHECK(out.size() == 64);
  CHECK(out.points().back().coords[0] == 63);

  CHECK(run(exhaustive_prune({}, parse_predicate("1 == 1")), space).points() == space.points());
  CHECK(run(exhaustive_prune({}, parse_predicate("1 == 0")), space).empty());
  CHECK_THROWS_AS(exhaustive_prune({}, MetricExpr::parse("k + 1")), Error);
  CHECK_THROWS_AS(run(exhaustive_prune({}, parse_predicate("nope > 1")), space), Error);
}

TEST_CASE("exhaustive sort") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  DesignSpace space = build_space(dummy);
  Runner run;
  auto stable = run(exhaustive_sort({}, MetricExpr::parse("3"), true), space);
  CHECK(stable.points() == space.points());

  auto key = coord_evaluator("synth", "DSP_synth", [](const Coords& c) { return c[0] * 27 + c[1] * 3 + c[2]; });
  auto asc = run(exhaustive_sort({key}, MetricExpr::parse("DSP_synth"), true), space);
  auto desc = run(exhaustive_sort({key}, MetricExpr::parse("DSP_synth"), false), space);
  std::vector<Point> rev(asc.points().rbegin(), asc.points().rend());
  CHECK(desc.points() == rev);

  auto sum = run(exhaustive_sort({}, MetricExpr::parse("param1 + param2 + param3"), true), space);
  CHECK(sum[0].coords == Coords{0, 0, 0});
  CHECK_THROWS_AS(run(exhaustive_sort({}, MetricExpr::parse("missing"), true), space), Error);
}

TEST_CASE("reduce dimension") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  DesignSpace space = build_space(dummy);
  Runner run;
  auto out = run(reduce_dimension("resource", true), space);
  CHECK(out.size() == 153);
  CHECK(run.stats.removed_dimensions == std::vector<std::string>{"param3"});
  CHECK(run.stats.notes == std::vector<std::string>{"cardinality 459 -> 153"});
  Schema all({{"a", ParamDomain::linear(0, 2), {"t"}}, {"b", ParamDomain::linear(0, 1), {"t"}}});
  DesignSpace g = build_space(all);
  CHECK(run(reduce_dimension("t", true), g).points() == g.points());
  CHECK_THROWS_AS(run(reduce_dimension("nope", true), space), Error);
}

TEST_CASE("gradient on a paraboloid over a 17x9 grid") {
  std::vector<int> sizes{17, 9};
  auto f = [](const Coords& c) { return -double((c[0] - 2) * (c[0] - 2) + (c[1] - 3) * (c[1] - 3)); };
  Runner run;
  auto out = run(gradient_sort({coord_evaluator("obj", "v", f)}, MetricExpr::parse("v"), true), build_space(grid_schema(sizes)));
  REQUIRE_FALSE(out.empty());
  CHECK(out[0].coords == Coords{2, 3});
  Descent d = replay_descent(sizes, f);
  CHECK(d.best == Coords{2, 3});
  CHECK(coord_set(out) == d.evaluated);
  CHECK(run.stats.transform.invocations == d.evaluated.size());
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].metrics[0].value >= out[i].metrics[0].value);
}

TEST_CASE("gradient edge cases") {
  Runner run;
  auto one = run(gradient_sort({coord_evaluator("o", "v", [](const Coords&) { return 1; })}, MetricExpr::parse("v"), true),
                 build_space(grid_schema({1})));
  CHECK(one.size() == 1);
  CHECK(run.stats.transform.invocations == 1);

  auto inc = run(gradient_sort({coord_evaluator("i", "v", [](const Coords& c) { return c[0] * 5 + c[1]; })},
                               MetricExpr::parse("v"), true),
                 build_space(grid_schema({5, 5})));
  CHECK(inc[0].coords == Coords{4, 4});
  CHECK(run.stats.transform.invocations <= 25);

  auto min = run(gradient_sort({coord_evaluator("m", "v", [](const Coords& c) { return (c[0] - 3) * (c[0] - 3); })},
                               MetricExpr::parse("v"), false),
                 build_space(grid_schema({7})));
  CHECK(min[0].coords == Coords{3});

  // Plateau: no strict improvement, so the walk stops at the start.
  auto flat = run(gradient_sort({coord_evaluator("p", "v", [](const Coords&) { return 2; })}, MetricExpr::parse("v"), true),
                  build_space(grid_schema({4, 4})));
  CHECK(flat.size() == 3);
  CHECK(flat[0].coords == Coords{0, 0});

  // Ties between neighbours go to the earliest in enumeration order.
  auto tie = run(gradient_sort({coord_evaluator("t", "v", [](const Coords& c) { return c[0] + c[1] == 1 ? 5 : 0; })},
                               MetricExpr::parse("v"), true),
                 build_space(grid_schema({3, 3})));
  CHECK(tie[0].coords == Coords{0, 1});

  CHECK_THROWS_AS(run(gradient_sort({}, MetricExpr::parse("x0"), true), build_space(grid_schema({2})).with_points({})), Error);
}

TEST_CASE("gradient with failures") {
  auto ev = std::make_shared<FunctionEvaluator>("f", std::vector<std::string>{"v"},
                                                [](const Schema&, const Point& p) -> Result<MetricValues> {
                                                  if (p.coords[0] == 1) return EvalError{EvalErrorKind::Timeout, "", p.coords, 0};
                                                  return MetricValues{double(p.coords[0] + p.coords[1])};
                                                });
  Runner run;
  run.policy = FailPolicy::prune_failed();
  auto out = run(gradient_sort({ev}, MetricExpr::parse("v"), true), build_space(grid_schema({3, 3})));
  for (const auto& p : out.points()) CHECK(p.coords[0] != 1);
  CHECK(out[0].coords == Coords{0, 2});

  Runner abort;
  CHECK_THROWS_AS(abort(gradient_sort({ev}, MetricExpr::parse("v"), true), build_space(grid_schema({3, 3}))), EvaluationAborted);

  Runner start;
  start.policy = FailPolicy::prune_failed();
  auto failing_start = std::make_shared<FunctionEvaluator>(
      "s", std::vector<std::string>{"v"},
      [](const Schema&, const Point& p) -> Result<MetricValues> { return EvalError{EvalErrorKind::ToolFailure, "", p.coords, 1}; });
  CHECK(start(gradient_sort({failing_start}, MetricExpr::parse("v"), true), build_space(grid_schema({3}))).empty());
  CHECK(start.stats.notes == std::vector<std::string>{"start point failed evaluation"});
}

TEST_CASE("property: gradient matches brute force on random unimodal objectives and never costs more than exhaustive") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<int> sizes;
    int dims = int(rng() % 4) + 1;
    for (int k = 0; k < dims; ++k) sizes.push_back(int(rng() % 6) + 1);
    Coords peak;
    std::vector<double> w;
    for (int n : sizes) {
      peak.push_back(int(rng() % n));
      w.push_back(0.5 + double(rng() % 100) / 40.0);
    }
    auto f = [peak, w](const Coords& c) {
      double s = 0;
      for (std::size_t k = 0; k < c.size(); ++k) s -= w[k] * std::abs(c[k] - peak[k]);
      return s;
    };
    DesignSpace space = build_space(grid_schema(sizes));
    Runner run;
    auto out = run(gradient_sort({coord_evaluator("u", "v", f)}, MetricExpr::parse("v"), true), space);
    CAPTURE(trial);
    CHECK(out[0].coords == peak);
    CHECK(run.stats.transform.invocations <= space.size());
    // Strict savings need room on two axes; see the small-grid cases below.
    bool wide = sizes.size() >= 2 && std::all_of(sizes.begin(), sizes.end(), [](int n) { return n >= 5; });
    if (wide) CHECK(run.stats.transform.invocations < space.size());
  }
}

TEST_CASE("small unimodal grids where the descent touches every point") {
  // 1-D with the optimum at the far end, and a 3x3 walk along the middle row.
  Runner a;
  a(gradient_sort({coord_evaluator("l", "v", [](const Coords& c) { return c[0]; })}, MetricExpr::parse("v"), true),
    build_space(grid_schema({3})));
  CHECK(a.stats.transform.invocations == 3);
  Runner b;
  auto f = [](const Coords& c) { return -2.0 * std::abs(c[0] - 1) - std::abs(c[1] - 2); };
  auto out = b(gradient_sort({coord_evaluator("m", "v", f)}, MetricExpr::parse("v"), true), build_space(grid_schema({3, 3})));
  CHECK(out[0].coords == Coords{1, 2});
  CHECK(b.stats.transform.invocations == 9);
}

TEST_CASE("quick prune on i + j >= 9") {
  DesignSpace space = build_space(grid_schema({10, 10}));
  auto calls = std::make_shared<std::atomic<int>>(0);
  auto ev = coord_evaluator("s", "sum", [](const Coords& c) { return c[0] + c[1]; }, calls);
  Runner run;
  QuickPruneOptions opt(parse_predicate("sum >= 9"));
  opt.evaluators = {ev};
  auto out = run(quick_prune(opt), space);
  CHECK(out.size() == 55);
  for (const auto& p : out.points()) CHECK(p.coords[0] + p.coords[1] >= 9);
  CHECK(run.stats.predicate_evaluations < 100);
  CHECK(calls->load() < 100);

  Runner full;
  opt.probe = FrontierProbe::Full;
  CHECK(coord_set(full(quick_prune(opt), space)) == coord_set(out));
}

TEST_CASE("quick prune with tautology and contradiction") {
  DesignSpace space = build_space(grid_schema({4, 5}));
  Runner run;
  auto all = run(quick_prune(QuickPruneOptions(parse_predicate("1 == 1"))), space);
  CHECK(all.size() == space.size());
  auto none = run(quick_prune(QuickPruneOptions(parse_predicate("1 == 0"))), space);
  CHECK(none.empty());
  REQUIRE_FALSE(run.stats.notes.empty());
  CHECK(run.stats.notes[0].rfind("NoKeptPoint", 0) == 0);
}

TEST_CASE("quick prune needs a full grid and a predicate") {
  DesignSpace space = build_space(grid_schema({4, 4}));
  Runner run;
  auto partial = space.with_points({space[0], space[3]});
  CHECK_THROWS_AS(run(quick_prune(QuickPruneOptions(parse_predicate("x0 > 0"))), partial), Error);
  CHECK_THROWS_AS(quick_prune(QuickPruneOptions(MetricExpr::parse("x0"))), Error);
}

TEST_CASE("quick prune on a projected concern re-expands the kept points") {
  Schema s({{"a", ParamDomain::linear(0, 5), {"q"}}, {"b", ParamDomain::linear(0, 3), {"r"}}, {"c", ParamDomain::linear(0, 4), {"q"}}});
  DesignSpace space = build_space(s);
  // The evaluator sees projected points, so it reads parameters by name.
  auto ev = std::make_shared<ExprEvaluator>("qos", std::vector<std::pair<std::string, std::string>>{{"err", "10 - a - c"}});
  QuickPruneOptions opt(parse_predicate("err <= 5"));
  opt.evaluators = {ev};
  opt.concern = "q";
  Runner run;
  auto out = run(quick_prune(opt), space);
  std::set<Coords> expected;
  for (const auto& c : all_coords({6, 4, 5}))
    if (10 - c[0] - c[2] <= 5) expected.insert(c);
  CHECK(coord_set(out) == expected);
  CHECK(run.stats.predicate_evaluations < 30);
  // Points kept without evaluation carry no metric.
  for (const auto& p : out.points()) {
    if (p.metrics.empty()) continue;
    REQUIRE(p.metrics.size() == 1);
    CHECK(p.metrics[0].name == "err");
    CHECK(p.metrics[0].value == 10.0 - p.coords[0] - p.coords[2]);
  }
  // Order follows the input space.
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].coords < out[i].coords);
}

TEST_CASE("property: quick prune equals exhaustive prune on monotone instances") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 80; ++trial) {
    std::vector<int> sizes{int(rng() % 11) + 2, int(rng() % 11) + 2};
    if (trial % 3 == 0) sizes.push_back(int(rng() % 4) + 1);
    bool upward = trial % 2 == 0;
    auto m = testing::random_monotone(rng, sizes, upward);
    DesignSpace space = build_space(grid_schema(sizes));
    QuickPruneOptions opt(parse_predicate("keep == 1"));
    opt.evaluators = {keep_flag(m)};
    opt.side = upward ? KeepSide::UpwardClosed : KeepSide::DownwardClosed;
    Runner quick, exhaustive;
    auto q = quick(quick_prune(opt), space);
    auto e = exhaustive(exhaustive_prune({keep_flag(m)}, parse_predicate("keep == 1")), space);
    CAPTURE(trial);
    CHECK(coord_set(q) == coord_set(e));
  }
}

TEST_CASE("property: frontier equals the brute-force frontier on monotone 2-D instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> sizes{int(rng() % 10) + 3, int(rng() % 10) + 3};
    auto m = testing::random_monotone(rng, sizes, trial % 2 == 0);
    DesignSpace space = build_space(grid_schema(sizes));
    QuickPruneOptions opt(parse_predicate("keep == 1"));
    opt.evaluators = {keep_flag(m)};
    opt.side = m.upward ? KeepSide::UpwardClosed : KeepSide::DownwardClosed;
    EvalCache cache;
    StepContext ctx{cache, 1, FailPolicy::abort(), nullptr};
    auto trace = quick_prune_trace(space, opt, ctx);

    std::vector<std::size_t> brute;
    for (const auto& c : all_coords(sizes)) {
      if (!m.keep(c)) continue;
      bool edge = false;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          Coords q{c[0] + di, c[1] + dj};
          if ((di || dj) && q[0] >= 0 && q[1] >= 0 && q[0] < sizes[0] && q[1] < sizes[1] && !m.keep(q)) edge = true;
        }
      if (edge) brute.push_back(testing::flat_index(sizes, c));
    }
    CAPTURE(trial);
    CHECK(trace.frontier == brute);
  }
}

TEST_CASE("pipeline equals hand composition") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  DesignSpace space = build_space(dummy);
  auto est = std::make_shared<ExprEvaluator>("estim", std::vector<std::pair<std::string, std::string>>{{"DSP_estim", "param1 * param2 / 8"}});
  auto syn = std::make_shared<ExprEvaluator>(
      "synth", std::vector<std::pair<std::string, std::string>>{{"DSP_synth", "param1 * param2 / 8 + param3 - 4"}});
  auto prune = exhaustive_prune({est}, parse_predicate("DSP_estim < 64"));
  auto sort = exhaustive_sort({syn}, MetricExpr::parse("DSP_synth"), false);

  Pipeline pipe{{prune, sort}, 2, FailPolicy::abort(), std::nullopt};
  EvalCache cache;
  auto result = run_pipeline(pipe, space, cache);
  REQUIRE_FALSE(result.error);
  REQUIRE(result.steps.size() == 2);
  CHECK(result.steps[0].input_size == 459);

  Runner run;
  auto hand = run(sort, run(prune, space));
  CHECK(result.space.points() == hand.points());

  Pipeline id{{identity_step()}, 1, FailPolicy::abort(), std::nullopt};
  EvalCache c2;
  auto r = run_pipeline(id, space, c2);
  CHECK(r.space.points() == space.points());
}

TEST_CASE("pipeline records the failing step") {
  DesignSpace space = build_space(grid_schema({3}));
  auto bad = std::make_shared<FunctionEvaluator>("bad", std::vector<std::string>{"v"},
                                                 [](const Schema&, const Point& p) -> Result<MetricValues> {
                                                   return EvalError{EvalErrorKind::ToolFailure, "no", p.coords, 2};
                                                 });
  Pipeline pipe{{identity_step(), exhaustive_map({bad})}, 1, FailPolicy::abort(), std::nullopt};
  EvalCache cache;
  auto r = run_pipeline(pipe, space, cache);
  REQUIRE(r.error);
  REQUIRE(r.eval_error);
  CHECK(r.failed_step == 1u);
  CHECK(r.steps.size() == 2);
  CHECK(r.space.size() == 3);

  pipe.policy_override = FailPolicy::prune_failed();
  EvalCache c2;
  auto ok = run_pipeline(pipe, space, c2);
  CHECK_FALSE(ok.error);
  CHECK(ok.space.empty());
}

TEST_CASE("property: steps are pure") {
  Schema dummy = load_schema(testing::fixture("schemas/dummy.json"));
  DesignSpace space = build_space(dummy);
  auto ev = coord_evaluator("e", "v", [](const Coords& c) { return c[0] * 3.0 - c[1] + c[2] * 0.5; });
  QuickPruneOptions qp(parse_predicate("v >= 10"));
  qp.evaluators = {ev};
  std::vector<StepPtr> steps{identity_step(),
                             exhaustive_map({ev}),
                             exhaustive_sort({ev}, MetricExpr::parse("v"), true),
                             exhaustive_prune({ev}, parse_predicate("v > 3")),
                             reduce_dimension("resource", true),
                             gradient_sort({ev}, MetricExpr::parse("v"), true),
                             quick_prune(qp)};
  const auto before = space.points();
  for (const auto& step : steps) {
    Runner a, b;
    auto x = a(step, space);
    auto y = b(step, space);
    CAPTURE(step->kind());
    CHECK(x.points() == y.points());
    CHECK(x.schema() == y.schema());
    CHECK(space.points() == before);
  }
}

TEST_CASE("property: prune and sort commute on sets") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{int(rng() % 8) + 1, int(rng() % 8) + 1};
    DesignSpace space = build_space(grid_schema(sizes));
    const std::uint64_t salt = rng();
    auto ev = coord_evaluator("h", "h", [salt](const Coords& c) { return double((c[0] * 131 + c[1] * 17 + salt) % 23); });
    auto prune = exhaustive_prune({}, parse_predicate("x0 + 2 * x1 > 4"));
    auto sort = exhaustive_sort({ev}, MetricExpr::parse("h"), trial % 2 == 0);
    Runner r1, r2;
    auto ps = r1(sort, r1(prune, space));
    auto sp = r2(prune, r2(sort, space));
    CHECK(coord_set(ps) == coord_set(sp));
    CHECK(ps.size() == sp.size());
  }
}
