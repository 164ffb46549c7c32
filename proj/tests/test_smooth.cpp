#include <doctest.h>

#include <cmath>
#include <random>

#include "pleak/smooth.hpp"

#include "helpers.hpp"

using namespace pleak;
using namespace pleak::sensderiv;
using testutil::make_workflow;
using testutil::TaskSpec;

namespace {

const char *kDist2 = "sqrt((s.latitude - p.latitude)^2.0 + (s.longitude - p.longitude)^2.0)";

struct Scenario {
  testutil::OwnedWorkflow owned;
  NormSet norms;
  RangeMap ranges;
  SmoothParams params;
};

sql::TableSchema ship_schema() {
  sql::TableSchema s;
  s.name = "ship";
  s.columns = {{"name", ColType::Text},     {"latitude", ColType::Float8},
               {"longitude", ColType::Float8}, {"maxspeed", ColType::Float8}};
  return s;
}

sql::TableSchema port_schema() {
  sql::TableSchema s;
  s.name = "port";
  s.columns = {{"latitude", ColType::Float8}, {"longitude", ColType::Float8}};
  return s;
}

// MIN arrival-time query: sensitive ship 0 sits nearest with speed exactly 20.
Scenario min_arrival_scenario() {
  Scenario sc;
  sql::Catalog cat;
  cat["ship"] = ship_schema();
  cat["port"] = port_schema();
  sql::Database db;
  db["ship"] = {cat["ship"],
                {{std::string("alfa"), 30.0, 50.0, 20.0},
                 {std::string("beta"), 150.0, 90.0, 30.0},
                 {std::string("ceta"), 200.0, 200.0, 25.0}}};
  db["port"] = {cat["port"], {{10.0, 20.0}}};
  sc.owned = make_workflow(
      {{"t", {"ship", "port"}, {"first_arrival"}}},
      {{"t", std::string("SELECT MIN(") + kDist2 +
                 " / s.maxspeed) INTO first_arrival FROM ship s, port p "
                 "WHERE s.maxspeed >= 20.0;"}},
      cat, db);
  NormSpec spec = parse_norm("rows: 0;\ncols: latitude, longitude;\n"
                             "z = lp 2.0 latitude longitude;\nreturn linf z;\n");
  sc.norms["ship"] = {spec, compile_norm(spec, cat["ship"])};
  sc.ranges[{"ship", "latitude"}] = {0, 300};
  sc.ranges[{"ship", "longitude"}] = {0, 300};
  sc.ranges[{"ship", "maxspeed"}] = {20, 90};
  return sc;
}

// SUM of distances with two sensitive rows, each contributing dual 2.
Scenario sum_additivity_scenario() {
  Scenario sc;
  sql::Catalog cat;
  cat["ship"] = ship_schema();
  cat["port"] = port_schema();
  sql::Database db;
  db["ship"] = {cat["ship"],
                {{std::string("alfa"), 30.0, 50.0, 25.0},
                 {std::string("beta"), 150.0, 90.0, 30.0},
                 {std::string("ceta"), 200.0, 200.0, 40.0}}};
  db["port"] = {cat["port"], {{10.0, 20.0}}};
  sc.owned = make_workflow(
      {{"t", {"ship", "port"}, {"total_dist"}}},
      {{"t", std::string("SELECT SUM(") + kDist2 +
                 ") INTO total_dist FROM ship s, port p WHERE s.maxspeed >= 20.0;"}},
      cat, db);
  NormSpec spec = parse_norm("rows: 0, 1;\ncols: latitude, longitude;\n"
                             "u = lp 2.0 latitude longitude;\nz = scaleNorm 0.5 u;\n"
                             "return linf z;\n");
  sc.norms["ship"] = {spec, compile_norm(spec, cat["ship"])};
  sc.ranges[{"ship", "latitude"}] = {0, 300};
  sc.ranges[{"ship", "longitude"}] = {0, 300};
  return sc;
}

} // namespace

TEST_CASE("count with well-separated margins matches the exact count") {
  sql::Catalog cat;
  cat["ship"] = ship_schema();
  sql::Database db;
  // margins of the predicate are all >= 1 in absolute value
  db["ship"] = {cat["ship"],
                {{std::string("a"), 5.0, 0.0, 25.0},
                 {std::string("b"), 7.0, 0.0, 30.0},
                 {std::string("c"), 2.0, 0.0, 40.0}}};
  auto owned = make_workflow(
      {{"t", {"ship"}, {"near"}}},
      {{"t", "SELECT s.name INTO near FROM ship s WHERE s.latitude <= 4.0;"}}, cat, db);
  NormSpec spec =
      parse_norm("rows: all;\ncols: latitude;\nz = lp 2.0 latitude;\nreturn linf z;\n");
  NormSet norms;
  norms["ship"] = {spec, compile_norm(spec, cat["ship"])};
  SmoothParams params;  // a = 10
  GroundFunction fn = smooth_lower(owned.wf, "near", norms, {}, params);
  CHECK(fn.aggregation() == sql::AggKind::Count);
  double v = fn.value(fn.baseline());
  CHECK(std::fabs(v - 1.0) < 0.01);  // only ship c passes, margins >= 1
}

TEST_CASE("no sensitive coordinates means a zero gradient") {
  sql::Catalog cat;
  cat["ship"] = ship_schema();
  sql::Database db;
  db["ship"] = {cat["ship"], {{std::string("a"), 5.0, 0.0, 25.0}}};
  auto owned = make_workflow(
      {{"t", {"ship"}, {"o"}}},
      {{"t", "SELECT s.name INTO o FROM ship s WHERE s.latitude <= 4.0;"}}, cat, db);
  NormSpec spec = parse_norm("rows: all;\ncols: none;\nG: 1.0;\n");
  NormSet norms;
  norms["ship"] = {spec, compile_norm(spec, cat["ship"])};
  GroundFunction fn = smooth_lower(owned.wf, "o", norms, {}, SmoothParams{});
  CHECK(fn.coordinates().empty());
  auto sens = derivative_sensitivity(fn, norms);
  CHECK(sens.at("ship") == 0.0);
}

TEST_CASE("min arrival time needs a speed range") {
  Scenario sc = min_arrival_scenario();
  SUBCASE("with the range the value is finite") {
    GroundFunction fn = smooth_lower(sc.owned.wf, "first_arrival", sc.norms, sc.ranges,
                                     sc.params);
    double v = fn.value(fn.baseline());
    CHECK(std::isfinite(v));
    // near the true minimal arrival time sqrt(20^2+30^2)/20
    CHECK(v == doctest::Approx(std::sqrt(20.0 * 20 + 30 * 30) / 20.0).epsilon(0.05));
  }
  SUBCASE("without it the divisor is unbounded") {
    RangeMap noSpeed = sc.ranges;
    noSpeed.erase({"ship", "maxspeed"});
    try {
      smooth_lower(sc.owned.wf, "first_arrival", sc.norms, noSpeed, sc.params);
      FAIL("expected missing-attacker-bound error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::MissingAttackerBound);
      CHECK(std::string(e.what()).find("maxspeed") != std::string::npos);
    }
  }
  SUBCASE("a range straddling zero is as bad as none") {
    RangeMap zeroSpeed = sc.ranges;
    zeroSpeed[{"ship", "maxspeed"}] = {0, 90};
    CHECK_THROWS_AS(
        smooth_lower(sc.owned.wf, "first_arrival", sc.norms, zeroSpeed, sc.params),
        Error);
  }
}

TEST_CASE("derivative sensitivity of the min query is the inverse speed bound") {
  Scenario sc = min_arrival_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "first_arrival", sc.norms, sc.ranges, sc.params);
  auto sens = derivative_sensitivity(fn, sc.norms);
  // 1/20 = 0.05 within the acceptance window
  CHECK(sens.at("ship") > 0.045);
  CHECK(sens.at("ship") < 0.055);
}

TEST_CASE("identity and scaled-identity sensitivities") {
  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}};
  cat["t"] = t;
  sql::Database db;
  db["t"] = {t, {{3.0}}};

  SUBCASE("f(x) = x under l2 on one coordinate gives 1") {
    auto owned = make_workflow({{"q", {"t"}, {"o"}}},
                               {{"q", "SELECT SUM(t.x) INTO o FROM t WHERE TRUE;"}}, cat, db);
    NormSpec spec = parse_norm("rows: 0;\ncols: x;\nz = lp 2.0 x;\nreturn linf z;\n");
    NormSet norms;
    norms["t"] = {spec, compile_norm(spec, t)};
    GroundFunction fn = smooth_lower(owned.wf, "o", norms, {}, SmoothParams{});
    auto sens = derivative_sensitivity(fn, norms);
    CHECK(sens.at("t") == doctest::Approx(1.0));
  }
  SUBCASE("gradient 0.4 against scaleNorm 0.2 contributes 2.0") {
    auto owned = make_workflow(
        {{"q", {"t"}, {"o"}}},
        {{"q", "SELECT SUM(0.4 * t.x) INTO o FROM t WHERE TRUE;"}}, cat, db);
    NormSpec spec = parse_norm(
        "rows: 0;\ncols: x;\nu = lp 2.0 x;\nz = scaleNorm 0.2 u;\nreturn linf z;\n");
    NormSet norms;
    norms["t"] = {spec, compile_norm(spec, t)};
    GroundFunction fn = smooth_lower(owned.wf, "o", norms, {}, SmoothParams{});
    auto sens = derivative_sensitivity(fn, norms);
    CHECK(sens.at("t") == doctest::Approx(2.0));
  }
}

TEST_CASE("linf combiner adds per-row contributions: 2 + 2 = 4") {
  Scenario sc = sum_additivity_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "total_dist", sc.norms, sc.ranges, sc.params);
  auto sens = derivative_sensitivity(fn, sc.norms);
  CHECK(sens.at("ship") == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("distinct targets are rejected by the smooth engine") {
  sql::Catalog cat;
  cat["ship"] = ship_schema();
  sql::Database db;
  db["ship"] = {cat["ship"], {{std::string("a"), 5.0, 0.0, 25.0}}};
  auto owned = make_workflow(
      {{"t", {"ship"}, {"o"}}},
      {{"t", "SELECT DISTINCT s.name INTO o FROM ship s WHERE TRUE;"}}, cat, db);
  try {
    smooth_lower(owned.wf, "o", {}, {}, SmoothParams{});
    FAIL("expected unsupported-aggregation error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::UnsupportedAggregation);
  }
}

TEST_CASE("aggregates nested inside the analyzed branch are rejected") {
  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}};
  cat["t"] = t;
  sql::Database db;
  db["t"] = {t, {{1.0}}};
  SUBCASE("aggregate feeding a second aggregation") {
    auto owned = make_workflow(
        {{"t1", {"t"}, {"mid"}}, {"t2", {"mid", "t"}, {"o"}}},
        {{"t1", "SELECT COUNT(*) INTO mid FROM t WHERE TRUE;"},
         {"t2", "SELECT SUM(mid.count + t.x) INTO o FROM mid, t WHERE TRUE;"}},
        cat, db);
    try {
      smooth_lower(owned.wf, "o", {}, {}, SmoothParams{});
      FAIL("expected unsupported-aggregation error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::UnsupportedAggregation);
    }
  }
  SUBCASE("aggregate inside the counted condition") {
    auto owned = make_workflow(
        {{"t1", {"t"}, {"mid"}}, {"t2", {"mid", "t"}, {"o"}}},
        {{"t1", "SELECT COUNT(*) INTO mid FROM t WHERE TRUE;"},
         {"t2", "SELECT t.x INTO o FROM mid, t WHERE t.x <= mid.count;"}},
        cat, db);
    CHECK_THROWS_AS(smooth_lower(owned.wf, "o", {}, {}, SmoothParams{}), Error);
  }
  SUBCASE("counting the rows of an aggregated table is fine") {
    auto owned = make_workflow(
        {{"t1", {"t"}, {"mid"}}, {"t2", {"mid"}, {"o"}}},
        {{"t1", "SELECT COUNT(*) INTO mid FROM t WHERE TRUE;"},
         {"t2", "SELECT mid.count + 1 AS c INTO o FROM mid WHERE TRUE;"}},
        cat, db);
    GroundFunction fn = smooth_lower(owned.wf, "o", {}, {}, SmoothParams{});
    CHECK(fn.value(fn.baseline()) == doctest::Approx(1.0));
  }
}

TEST_CASE("min over an empty join errors") {
  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}};
  cat["t"] = t;
  sql::Database db;
  db["t"] = {t, {}};
  auto owned = make_workflow({{"q", {"t"}, {"o"}}},
                             {{"q", "SELECT MIN(t.x) INTO o FROM t WHERE TRUE;"}}, cat, db);
  GroundFunction fn = smooth_lower(owned.wf, "o", {}, {}, SmoothParams{});
  try {
    fn.value(fn.baseline());
    FAIL("expected empty-aggregate error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::EmptyAggregate);
  }
}

// --- gradient vs finite differences ----------------------------------------

namespace {

struct RandomScenario {
  testutil::OwnedWorkflow owned;
  NormSet norms;
  GroundFunction fn;
};

RandomScenario random_scenario(std::mt19937 &rng) {
  auto pick = [&](int n) { return static_cast<int>(rng() % n); };
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (rng() % 10000) / 10000.0;
  };

  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}, {"y", ColType::Float8}};
  sql::TableSchema u;
  u.name = "u";
  u.columns = {{"w", ColType::Float8}};
  cat["t"] = t;
  cat["u"] = u;

  sql::Database db;
  sql::TableData td;
  td.schema = t;
  int rows = 2 + pick(3);
  for (int r = 0; r < rows; ++r)
    td.rows.push_back({uniform(-3, 3), uniform(-3, 3)});
  db["t"] = td;
  sql::TableData ud;
  ud.schema = u;
  for (int r = 0; r < 1 + pick(2); ++r)
    ud.rows.push_back({uniform(-2, 2)});
  db["u"] = ud;

  const char *shapes[] = {
      "SELECT COUNT(*) INTO o FROM t, u WHERE t.x + u.w <= t.y;",
      "SELECT SUM(t.x * t.y + u.w) INTO o FROM t, u WHERE t.x <= 2.0 AND u.w >= t.y - 2.0;",
      "SELECT MIN(t.x + 0.5 * t.y) INTO o FROM t, u WHERE t.y <= u.w + 4.0;",
      "SELECT MAX(t.x - t.y) INTO o FROM t, u WHERE t.x >= u.w - 4.0;",
      "SELECT SUM(sqrt(t.x * t.x + t.y * t.y + 1.0)) INTO o FROM t, u WHERE t.x <= u.w + 3.0;",
  };
  RandomScenario sc;
  sc.owned = make_workflow({{"q", {"t", "u"}, {"o"}}}, {{"q", shapes[pick(5)]}}, cat, db);
  NormSpec spec =
      parse_norm("rows: all;\ncols: x, y;\nz = lp 2.0 x y;\nreturn linf z;\n");
  sc.norms["t"] = {spec, compile_norm(spec, t)};
  sc.fn = smooth_lower(sc.owned.wf, "o", sc.norms, {}, SmoothParams{});
  return sc;
}

} // namespace

TEST_CASE("gradient matches central finite differences on random instances") {
  std::mt19937 rng(90210);
  int checked = 0;
  for (int iter = 0; iter < 110; ++iter) {
    RandomScenario sc = random_scenario(rng);
    std::vector<double> x = sc.fn.baseline();
    std::vector<double> grad;
    try {
      sc.fn.value_and_gradient(x, grad);
    } catch (const Error &) {
      continue;  // empty min/max joins
    }
    const double h = 1e-4;
    for (size_t k = 0; k < x.size(); ++k) {
      std::vector<double> xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      double fd = (sc.fn.value(xp) - sc.fn.value(xm)) / (2 * h);
      double denom = std::max({1.0, std::fabs(grad[k]), std::fabs(fd)});
      CHECK(std::fabs(fd - grad[k]) / denom <= 1e-4);
    }
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("parallel and serial evaluation agree") {
  Scenario sc = sum_additivity_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "total_dist", sc.norms, sc.ranges, sc.params);
  std::vector<double> g1, g2;
  double v1 = fn.value_and_gradient(fn.baseline(), g1, ExecMode::Serial);
  double v2 = fn.value_and_gradient(fn.baseline(), g2, ExecMode::Parallel);
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));

  Scenario mc = min_arrival_scenario();
  GroundFunction mfn = smooth_lower(mc.owned.wf, "first_arrival", mc.norms, mc.ranges, mc.params);
  double m1 = mfn.value(mfn.baseline(), ExecMode::Serial);
  double m2 = mfn.value(mfn.baseline(), ExecMode::Parallel);
  CHECK(m1 == doctest::Approx(m2).epsilon(1e-12));
}

// --- smooth bound ------------------------------------------------------------

TEST_CASE("constant-gradient function: bound equals the constant for any beta") {
  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}};
  cat["t"] = t;
  sql::Database db;
  db["t"] = {t, {{2.0}}};
  auto owned = make_workflow({{"q", {"t"}, {"o"}}},
                             {{"q", "SELECT SUM(3.0 * t.x) INTO o FROM t WHERE TRUE;"}}, cat, db);
  NormSpec spec = parse_norm("rows: 0;\ncols: x;\nz = lp 2.0 x;\nreturn linf z;\n");
  NormSet norms;
  norms["t"] = {spec, compile_norm(spec, t)};
  RangeMap ranges{{{"t", "x"}, {0, 10}}};
  GroundFunction fn = smooth_lower(owned.wf, "o", norms, ranges, SmoothParams{});
  for (double beta : {0.0, 0.05, 0.19}) {
    auto bound = smooth_bound(fn, norms, beta, ranges, SmoothParams{});
    CHECK(bound.at("t") == doctest::Approx(3.0));
  }
}

TEST_CASE("huge beta degenerates to the local derivative sensitivity") {
  Scenario sc = sum_additivity_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "total_dist", sc.norms, sc.ranges, sc.params);
  auto local = derivative_sensitivity(fn, sc.norms);
  auto bound = smooth_bound(fn, sc.norms, 1e9, sc.ranges, sc.params);
  CHECK(bound.at("ship") == doctest::Approx(local.at("ship")).epsilon(1e-9));
}

TEST_CASE("step-like count near a filter boundary exceeds the local sensitivity") {
  sql::Catalog cat;
  sql::TableSchema t;
  t.name = "t";
  t.columns = {{"x", ColType::Float8}};
  cat["t"] = t;
  sql::Database db;
  db["t"] = {t, {{0.0}}};  // far from the x <= 5 boundary
  auto owned = make_workflow({{"q", {"t"}, {"o"}}},
                             {{"q", "SELECT t.x INTO o FROM t WHERE t.x <= 5.0;"}}, cat, db);
  NormSpec spec = parse_norm("rows: 0;\ncols: x;\nz = lp 2.0 x;\nreturn linf z;\n");
  NormSet norms;
  norms["t"] = {spec, compile_norm(spec, t)};
  RangeMap ranges{{{"t", "x"}, {0, 10}}};
  GroundFunction fn = smooth_lower(owned.wf, "o", norms, ranges, SmoothParams{});

  double beta = 0.1;
  double local = derivative_sensitivity(fn, norms).at("t");
  auto bound = smooth_bound(fn, norms, beta, ranges, SmoothParams{});
  CHECK(bound.at("t") > local * 100);  // strictly above the near-zero local value

  // dense 1-D sweep oracle (1e4 points) over the same range
  double sweep = local;
  for (int i = 0; i < 10000; ++i) {
    double v = 10.0 * i / 9999.0;
    std::vector<double> x{v};
    auto sens = derivative_sensitivity(fn, norms, x, ExecMode::Serial);
    double cand = sens.at("t") * std::exp(-beta * std::fabs(v - 0.0));
    sweep = std::max(sweep, cand);
  }
  CHECK(bound.at("t") > local);
  CHECK(sweep >= bound.at("t") * 0.95);  // grid approximates the sweep from below
  CHECK(sweep > local * 100);
}

TEST_CASE("smooth bound never falls below the derivative sensitivity") {
  std::mt19937 rng(5150);
  for (int iter = 0; iter < 8; ++iter) {
    RandomScenario sc = random_scenario(rng);
    RangeMap ranges{{{"t", "x"}, {-3, 3}}, {{"t", "y"}, {-3, 3}}};
    double local;
    try {
      local = derivative_sensitivity(sc.fn, sc.norms).at("t");
    } catch (const Error &) {
      continue;
    }
    auto bound = smooth_bound(sc.fn, sc.norms, 0.1, ranges, SmoothParams{});
    CHECK(bound.at("t") >= local - 1e-12);
  }
}

TEST_CASE("smooth bound is nonincreasing in beta") {
  Scenario sc = min_arrival_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "first_arrival", sc.norms, sc.ranges, sc.params);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.0, 0.02, 0.05, 0.1, 0.19}) {
    auto bound = smooth_bound(fn, sc.norms, beta, sc.ranges, sc.params);
    CHECK(bound.at("ship") <= prev + 1e-12);
    prev = bound.at("ship");
  }
}

TEST_CASE("smooth bound parallel equals serial") {
  Scenario sc = min_arrival_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "first_arrival", sc.norms, sc.ranges, sc.params);
  auto b1 = smooth_bound(fn, sc.norms, 0.1, sc.ranges, sc.params, ExecMode::Serial);
  auto b2 = smooth_bound(fn, sc.norms, 0.1, sc.ranges, sc.params, ExecMode::Parallel);
  CHECK(b1.at("ship") == doctest::Approx(b2.at("ship")).epsilon(1e-12));
}

TEST_CASE("missing range for a sensitive coordinate fails the bound") {
  Scenario sc = sum_additivity_scenario();
  GroundFunction fn = smooth_lower(sc.owned.wf, "total_dist", sc.norms, sc.ranges, sc.params);
  RangeMap onlyLat{{{"ship", "latitude"}, {0, 300}}};
  CHECK_THROWS_AS(smooth_bound(fn, sc.norms, 0.1, onlyLat, sc.params), Error);
}
