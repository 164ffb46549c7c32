#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "pleak/sql.hpp"

using namespace pleak;
using namespace pleak::sql;

namespace {

SelectQuery &resolve(Statement &st, const Catalog &cat, const FuncMap &funcs) {
  resolve_select(*st.select, cat, funcs);
  return *st.select;
}

Catalog two_table_catalog() {
  Catalog cat;
  TableSchema a;
  a.name = "a";
  a.columns = {{"x", ColType::Int8}, {"y", ColType::Float8}, {"tag", ColType::Text}};
  TableSchema b;
  b.name = "b";
  b.columns = {{"k", ColType::Int8}, {"w", ColType::Float8}};
  cat["a"] = a;
  cat["b"] = b;
  return cat;
}

} // namespace

TEST_CASE("parses the reachable-ports query shape") {
  auto stmts = parse_sql(
      "SELECT p.port_id INTO reachable_ports FROM port p, ship s, parameters par "
      "WHERE s.name = par.shipname AND dist(s.latitude, s.longitude, p.latitude, "
      "p.longitude) / s.maxspeed <= par.deadline;");
  REQUIRE(stmts.size() == 1);
  REQUIRE(stmts[0].kind == Statement::Kind::Select);
  const SelectQuery &q = *stmts[0].select;
  CHECK(q.sources.size() == 3);
  CHECK(q.intoTable == "reachable_ports");
  CHECK(q.projections.size() == 1);
  CHECK_FALSE(q.distinct);
  // predicate is a conjunction
  CHECK(q.predicate->kind == Expr::Kind::Binary);
  CHECK(q.predicate->bop == BinaryOp::And);
}

TEST_CASE("minimal query parses") {
  auto stmts = parse_sql("SELECT 1 INTO t FROM x WHERE TRUE;");
  REQUIRE(stmts.size() == 1);
  CHECK(stmts[0].select->projections.size() == 1);
}

TEST_CASE("syntax error at end of input carries a position") {
  try {
    parse_sql("SELECT s.name FROM");
    FAIL("expected syntax error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::SqlSyntax);
    CHECK(e.line() >= 1);
  }
}

TEST_CASE("create table and function parse and typecheck") {
  auto stmts = parse_sql(
      "CREATE TABLE ship (name TEXT, latitude FLOAT8, longitude FLOAT8, maxspeed FLOAT8);\n"
      "CREATE FUNCTION dist(x1 FLOAT8, y1 FLOAT8, x2 FLOAT8, y2 FLOAT8) RETURNS FLOAT8 AS "
      "sqrt((x1-x2)^2.0 + (y1-y2)^2.0);\n");
  REQUIRE(stmts.size() == 2);
  CHECK(stmts[0].kind == Statement::Kind::CreateTable);
  CHECK(stmts[0].table.columns.size() == 4);
  CHECK(stmts[1].kind == Statement::Kind::CreateFunction);
  CHECK(stmts[1].func->params.size() == 4);
}

TEST_CASE("function body referencing a non-parameter is rejected") {
  CHECK_THROWS_AS(parse_sql("CREATE FUNCTION f(x FLOAT8) RETURNS FLOAT8 AS x + y;"), Error);
}

TEST_CASE("distinct cannot combine with aggregation") {
  CHECK_THROWS_AS(parse_sql("SELECT DISTINCT COUNT(*) INTO t FROM x WHERE TRUE;"), Error);
}

TEST_CASE("csv loading") {
  TableSchema schema;
  schema.name = "ship";
  schema.columns = {{"name", ColType::Text}, {"speed", ColType::Float8}};

  SUBCASE("row count is preserved") {
    std::string csv = "name,speed\n";
    for (int i = 0; i < 53; ++i)
      csv += "s" + std::to_string(i) + "," + std::to_string(10 + i) + "\n";
    TableData t = load_table_data(schema, csv);
    CHECK(t.rows.size() == 53);
  }
  SUBCASE("header-only file yields zero rows") {
    TableData t = load_table_data(schema, "name,speed\n");
    CHECK(t.rows.empty());
  }
  SUBCASE("type mismatch names the cell") {
    try {
      load_table_data(schema, "name,speed\nfoo,abc\n");
      FAIL("expected type error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::CsvFormat);
      CHECK(e.line() == 2);
      CHECK(e.col() == 2);
    }
  }
  SUBCASE("arity mismatch is rejected") {
    CHECK_THROWS_AS(load_table_data(schema, "name,speed\nfoo\n"), Error);
  }
  SUBCASE("header must match schema order") {
    CHECK_THROWS_AS(load_table_data(schema, "speed,name\n"), Error);
  }
  SUBCASE("quoted text unescapes") {
    TableData t = load_table_data(schema, "name,speed\n\"a,\"\"b\",1.5\n");
    REQUIRE(t.rows.size() == 1);
    CHECK(std::get<std::string>(t.rows[0][0]) == "a,\"b");
  }
}

TEST_CASE("eval: count over cross join") {
  Catalog cat = two_table_catalog();
  Database db;
  db["a"] = {cat["a"], {{std::int64_t{1}, 1.0, std::string("p")},
                        {std::int64_t{2}, 2.0, std::string("q")}}};
  db["b"] = {cat["b"], {{std::int64_t{1}, 5.0},
                        {std::int64_t{2}, 6.0},
                        {std::int64_t{3}, 7.0}}};
  auto stmts = parse_sql("SELECT COUNT(*) INTO c FROM a, b WHERE TRUE;");
  auto &q = resolve(stmts[0], cat, {});
  TableData out = eval_query(q, db, {});
  REQUIRE(out.rows.size() == 1);
  CHECK(std::get<std::int64_t>(out.rows[0][0]) == 6);
}

TEST_CASE("eval: distinct deduplicates") {
  Catalog cat = two_table_catalog();
  Database db;
  db["a"] = {cat["a"], {{std::int64_t{1}, 1.0, std::string("p")},
                        {std::int64_t{1}, 2.0, std::string("p")},
                        {std::int64_t{2}, 3.0, std::string("q")}}};
  auto stmts = parse_sql("SELECT a.x INTO d FROM a WHERE TRUE;");
  {
    auto &q = resolve(stmts[0], cat, {});
    CHECK(eval_query(q, db, {}).rows.size() == 3);
  }
  auto dstmts = parse_sql("SELECT DISTINCT a.x INTO d FROM a WHERE TRUE;");
  auto &dq = resolve(dstmts[0], cat, {});
  CHECK(eval_query(dq, db, {}).rows.size() == 2);
}

TEST_CASE("eval: aggregation corner cases") {
  Catalog cat = two_table_catalog();
  Database db;
  db["a"] = {cat["a"], {}};
  SUBCASE("count of empty input is zero") {
    auto stmts = parse_sql("SELECT COUNT(*) INTO c FROM a WHERE TRUE;");
    auto &q = resolve(stmts[0], cat, {});
    CHECK(std::get<std::int64_t>(eval_query(q, db, {}).rows[0][0]) == 0);
  }
  SUBCASE("sum of empty input is zero") {
    auto stmts = parse_sql("SELECT SUM(a.y) INTO c FROM a WHERE TRUE;");
    auto &q = resolve(stmts[0], cat, {});
    CHECK(std::get<double>(eval_query(q, db, {}).rows[0][0]) == 0.0);
  }
  SUBCASE("min of empty input errors") {
    auto stmts = parse_sql("SELECT MIN(a.y) INTO c FROM a WHERE TRUE;");
    auto &q = resolve(stmts[0], cat, {});
    try {
      eval_query(q, db, {});
      FAIL("expected empty-aggregate error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::EmptyAggregate);
    }
  }
}

TEST_CASE("eval: division by zero names the offending rows") {
  Catalog cat = two_table_catalog();
  Database db;
  db["a"] = {cat["a"], {{std::int64_t{1}, 0.0, std::string("p")}}};
  auto stmts = parse_sql("SELECT a.x INTO t FROM a WHERE 1.0 / a.y > 0.5;");
  auto &q = resolve(stmts[0], cat, {});
  try {
    eval_query(q, db, {});
    FAIL("expected division error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::DivisionByZero);
    CHECK(std::string(e.what()).find("a[0]") != std::string::npos);
  }
}

TEST_CASE("integer division truncates, float stays smooth, pow is real") {
  Catalog cat;
  TableSchema t;
  t.name = "t";
  t.columns = {{"i", ColType::Int8}, {"f", ColType::Float8}};
  cat["t"] = t;
  Database db;
  db["t"] = {t, {{std::int64_t{7}, 2.0}}};
  auto stmts = parse_sql("SELECT t.i / 2, t.f / 4.0, t.i ^ 2.0 INTO o FROM t WHERE TRUE;");
  auto &q = resolve(stmts[0], cat, {});
  TableData out = eval_query(q, db, {});
  CHECK(std::get<std::int64_t>(out.rows[0][0]) == 3);
  CHECK(std::get<double>(out.rows[0][1]) == doctest::Approx(0.5));
  CHECK(std::get<double>(out.rows[0][2]) == doctest::Approx(49.0));
}

// --- independent nested-loop reference evaluator ---------------------------

namespace {

Value ref_eval_expr(const Expr &e, const std::vector<const TableData *> &tabs,
                    const std::vector<size_t> &rows, const FuncMap &funcs,
                    const std::vector<Value> *args);

double ref_num(const Value &v) {
  if (std::holds_alternative<std::int64_t>(v))
    return double(std::get<std::int64_t>(v));
  if (std::holds_alternative<bool>(v))
    return std::get<bool>(v) ? 1 : 0;
  return std::get<double>(v);
}

Value ref_eval_expr(const Expr &e, const std::vector<const TableData *> &tabs,
                    const std::vector<size_t> &rows, const FuncMap &funcs,
                    const std::vector<Value> *args) {
  switch (e.kind) {
  case Expr::Kind::Const:
    return e.constant;
  case Expr::Kind::Column:
    if (e.sourceIndex < 0)
      return (*args)[e.columnIndex];
    return tabs[e.sourceIndex]->rows[rows[e.sourceIndex]][e.columnIndex];
  case Expr::Kind::Unary: {
    Value v = ref_eval_expr(*e.args[0], tabs, rows, funcs, args);
    if (e.uop == UnaryOp::Not)
      return !std::get<bool>(v);
    if (e.type == ColType::Int8)
      return -std::get<std::int64_t>(v);
    return -ref_num(v);
  }
  case Expr::Kind::Binary: {
    Value a = ref_eval_expr(*e.args[0], tabs, rows, funcs, args);
    if (e.bop == BinaryOp::And)
      return std::get<bool>(a) &&
             std::get<bool>(ref_eval_expr(*e.args[1], tabs, rows, funcs, args));
    if (e.bop == BinaryOp::Or)
      return std::get<bool>(a) ||
             std::get<bool>(ref_eval_expr(*e.args[1], tabs, rows, funcs, args));
    Value b = ref_eval_expr(*e.args[1], tabs, rows, funcs, args);
    bool bothInt =
        std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b);
    switch (e.bop) {
    case BinaryOp::Add:
      return bothInt ? Value{std::get<std::int64_t>(a) + std::get<std::int64_t>(b)}
                     : Value{ref_num(a) + ref_num(b)};
    case BinaryOp::Sub:
      return bothInt ? Value{std::get<std::int64_t>(a) - std::get<std::int64_t>(b)}
                     : Value{ref_num(a) - ref_num(b)};
    case BinaryOp::Mul:
      return bothInt ? Value{std::get<std::int64_t>(a) * std::get<std::int64_t>(b)}
                     : Value{ref_num(a) * ref_num(b)};
    case BinaryOp::Div:
      if (ref_num(b) == 0)
        throw Error(ErrorKind::DivisionByZero, "ref div0");
      if (bothInt)
        return Value{std::int64_t(std::trunc(ref_num(a) / ref_num(b)))};
      return Value{ref_num(a) / ref_num(b)};
    case BinaryOp::Pow:
      return Value{std::pow(ref_num(a), ref_num(b))};
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: {
      int c;
      if (std::holds_alternative<std::string>(a))
        c = std::get<std::string>(a).compare(std::get<std::string>(b));
      else
        c = ref_num(a) < ref_num(b) ? -1 : ref_num(a) > ref_num(b) ? 1 : 0;
      if (e.bop == BinaryOp::Lt) return Value{c < 0};
      if (e.bop == BinaryOp::Le) return Value{c <= 0};
      if (e.bop == BinaryOp::Gt) return Value{c > 0};
      return Value{c >= 0};
    }
    case BinaryOp::Eq:
    case BinaryOp::Ne: {
      bool eq;
      if (std::holds_alternative<std::string>(a))
        eq = std::get<std::string>(a) == std::get<std::string>(b);
      else if (std::holds_alternative<bool>(a))
        eq = std::get<bool>(a) == std::get<bool>(b);
      else
        eq = ref_num(a) == ref_num(b);
      return Value{e.bop == BinaryOp::Eq ? eq : !eq};
    }
    default:
      throw Error(ErrorKind::Evaluation, "ref bad op");
    }
  }
  case Expr::Kind::Call: {
    std::vector<Value> vals;
    for (const auto &arg : e.args)
      vals.push_back(ref_eval_expr(*arg, tabs, rows, funcs, args));
    if (e.callee == "sqrt")
      return Value{std::sqrt(ref_num(vals[0]))};
    if (e.callee == "abs")
      return e.type == ColType::Int8 ? Value{std::int64_t(std::llabs(std::get<std::int64_t>(vals[0])))}
                                     : Value{std::fabs(ref_num(vals[0]))};
    if (e.callee == "least" || e.callee == "greatest") {
      if (e.type == ColType::Int8) {
        std::int64_t best = std::get<std::int64_t>(vals[0]);
        for (size_t i = 1; i < vals.size(); ++i)
          best = e.callee == "least" ? std::min(best, std::get<std::int64_t>(vals[i]))
                                     : std::max(best, std::get<std::int64_t>(vals[i]));
        return Value{best};
      }
      double best = ref_num(vals[0]);
      for (size_t i = 1; i < vals.size(); ++i)
        best = e.callee == "least" ? std::min(best, ref_num(vals[i]))
                                   : std::max(best, ref_num(vals[i]));
      return Value{best};
    }
    return ref_eval_expr(*funcs.at(e.callee)->body, tabs, rows, funcs, &vals);
  }
  }
  throw Error(ErrorKind::Evaluation, "ref bad expr");
}

// Reference result: multiset of projected rows (or the aggregate).
std::multiset<std::vector<Value>> ref_eval(const SelectQuery &q, const Database &db,
                                           const FuncMap &funcs) {
  std::vector<const TableData *> tabs;
  for (const auto &[t, alias] : q.sources)
    tabs.push_back(&db.at(t));
  std::multiset<std::vector<Value>> out;
  std::vector<size_t> rows(tabs.size(), 0);

  std::vector<std::vector<Value>> matched;
  std::function<void(size_t)> recur = [&](size_t depth) {
    if (depth == tabs.size()) {
      if (!std::get<bool>(ref_eval_expr(*q.predicate, tabs, rows, funcs, nullptr)))
        return;
      if (q.aggregation == AggKind::None) {
        std::vector<Value> row;
        for (const auto &[e, alias] : q.projections)
          row.push_back(ref_eval_expr(*e, tabs, rows, funcs, nullptr));
        matched.push_back(std::move(row));
      } else if (q.aggregation == AggKind::Count) {
        matched.push_back({});
      } else {
        matched.push_back({ref_eval_expr(*q.aggArg, tabs, rows, funcs, nullptr)});
      }
      return;
    }
    for (rows[depth] = 0; rows[depth] < tabs[depth]->rows.size(); ++rows[depth])
      recur(depth + 1);
    rows[depth] = 0;
  };
  recur(0);

  switch (q.aggregation) {
  case AggKind::None:
    if (q.distinct) {
      std::set<std::vector<Value>> dedup(matched.begin(), matched.end());
      for (const auto &r : dedup)
        out.insert(r);
    } else {
      for (const auto &r : matched)
        out.insert(r);
    }
    break;
  case AggKind::Count:
    out.insert({Value{std::int64_t(matched.size())}});
    break;
  case AggKind::Sum: {
    double s = 0;
    std::int64_t si = 0;
    for (const auto &r : matched) {
      if (q.aggArg->type == ColType::Int8)
        si += std::get<std::int64_t>(r[0]);
      else
        s += ref_num(r[0]);
    }
    out.insert({q.aggArg->type == ColType::Int8 ? Value{si} : Value{s}});
    break;
  }
  case AggKind::Min:
  case AggKind::Max: {
    if (matched.empty())
      throw Error(ErrorKind::EmptyAggregate, "ref empty");
    std::vector<double> vals;
    for (const auto &r : matched)
      vals.push_back(ref_num(r[0]));
    double best = q.aggregation == AggKind::Min ? *std::min_element(vals.begin(), vals.end())
                                                : *std::max_element(vals.begin(), vals.end());
    if (q.aggArg->type == ColType::Int8)
      out.insert({Value{std::int64_t(best)}});
    else
      out.insert({Value{best}});
    break;
  }
  }
  return out;
}

// Random query generator over small instances.
struct Gen {
  std::mt19937 rng;
  explicit Gen(unsigned seed) : rng(seed) {}

  int pick(int n) { return static_cast<int>(rng() % n); }

  Database make_db(Catalog &cat) {
    Database db;
    int ntables = 1 + pick(2);
    for (int t = 0; t < ntables; ++t) {
      TableSchema s;
      s.name = std::string(1, char('a' + t));
      int ncols = 1 + pick(3);
      for (int c = 0; c < ncols; ++c) {
        ColType ty = pick(3) == 0 ? ColType::Int8 : ColType::Float8;
        s.columns.emplace_back(std::string(1, char('u' + c)), ty);
      }
      TableData d;
      d.schema = s;
      int nrows = pick(7);
      for (int r = 0; r < nrows; ++r) {
        std::vector<Value> row;
        for (const auto &[cn, ty] : s.columns) {
          if (ty == ColType::Int8)
            row.push_back(std::int64_t(pick(5)));
          else
            row.push_back(double(pick(10)) / 2.0);
        }
        d.rows.push_back(std::move(row));
      }
      cat[s.name] = s;
      db[s.name] = d;
    }
    return db;
  }

  std::string rand_column(const Catalog &cat, const std::vector<std::string> &aliases) {
    int t = pick(static_cast<int>(aliases.size()));
    const TableSchema &s = cat.at(aliases[t]);
    int c = pick(static_cast<int>(s.columns.size()));
    return aliases[t] + "." + s.columns[c].first;
  }

  std::string rand_num_expr(const Catalog &cat, const std::vector<std::string> &aliases,
                            int depth) {
    if (depth == 0 || pick(3) == 0) {
      if (pick(4) == 0)
        return std::to_string(pick(6));
      return rand_column(cat, aliases);
    }
    const char *ops[] = {"+", "-", "*"};
    return "(" + rand_num_expr(cat, aliases, depth - 1) + " " + ops[pick(3)] + " " +
           rand_num_expr(cat, aliases, depth - 1) + ")";
  }

  std::string rand_pred(const Catalog &cat, const std::vector<std::string> &aliases, int depth) {
    if (depth == 0 || pick(2) == 0) {
      const char *cmps[] = {"<", "<=", ">", ">=", "=", "<>"};
      return rand_num_expr(cat, aliases, 1) + " " + cmps[pick(6)] + " " +
             rand_num_expr(cat, aliases, 1);
    }
    const char *ops[] = {"AND", "OR"};
    return "(" + rand_pred(cat, aliases, depth - 1) + " " + ops[pick(2)] + " " +
           rand_pred(cat, aliases, depth - 1) + ")";
  }

  std::string make_query(const Catalog &cat) {
    std::vector<std::string> tables;
    for (const auto &[n, s] : cat)
      tables.push_back(n);
    std::vector<std::string> used;
    int nsrc = 1 + pick(static_cast<int>(tables.size()));
    for (int i = 0; i < nsrc; ++i)
      used.push_back(tables[i]);

    std::string sql = "SELECT ";
    int mode = pick(6);
    if (mode == 0) {
      sql += "COUNT(*)";
    } else if (mode == 1) {
      sql += "SUM(" + rand_num_expr(cat, used, 1) + ")";
    } else {
      if (mode == 2)
        sql = "SELECT DISTINCT ";
      int nproj = 1 + pick(2);
      for (int i = 0; i < nproj; ++i)
        sql += (i ? ", " : "") + rand_num_expr(cat, used, 1) + " AS c" + std::to_string(i);
    }
    sql += " INTO out FROM ";
    for (size_t i = 0; i < used.size(); ++i)
      sql += (i ? ", " : "") + used[i];
    sql += " WHERE " + rand_pred(cat, used, 2) + ";";
    return sql;
  }
};

} // namespace

TEST_CASE("evaluator agrees with the nested-loop reference on random queries") {
  Gen gen(987654);
  int ran = 0;
  for (int iter = 0; iter < 600; ++iter) {
    Catalog cat;
    Database db = gen.make_db(cat);
    std::string sql = gen.make_query(cat);
    CAPTURE(sql);
    auto stmts = parse_sql(sql);
    auto &q = *stmts[0].select;
    resolve_select(q, cat, {});

    std::multiset<std::vector<Value>> expect, got;
    bool refError = false, implError = false;
    try {
      expect = ref_eval(q, db, {});
    } catch (const Error &) {
      refError = true;
    }
    TableData out;
    try {
      out = eval_query(q, db, {});
    } catch (const Error &) {
      implError = true;
    }
    CHECK(refError == implError);
    if (refError || implError)
      continue;
    for (const auto &row : out.rows) {
      if (q.aggregation == AggKind::Count)
        got.insert({row[0]});
      else
        got.insert(row);
    }
    if (q.aggregation == AggKind::Count) {
      std::multiset<std::vector<Value>> expectCount;
      for (auto r : expect)
        expectCount.insert(r);
      // reference stores count rows as {} markers collapsed already
      CHECK(got == expect);
    } else {
      CHECK(got == expect);
    }
    ++ran;
  }
  CHECK(ran >= 500);
}

TEST_CASE("print-parse round trip is identity up to whitespace") {
  const char *scripts[] = {
      "SELECT a.x AS v INTO o FROM a, b WHERE a.x <= b.k AND TRUE;",
      "CREATE TABLE ship (name TEXT, speed FLOAT8, id INT8, ok BOOL);",
      "CREATE FUNCTION f(x FLOAT8, y FLOAT8) RETURNS FLOAT8 AS sqrt(x * x + y * y);",
      "SELECT DISTINCT s.name INTO out FROM ship s WHERE s.speed > 20.0 OR NOT (s.id = 3);",
      "SELECT SUM(t.a ^ 2.0) INTO agg FROM t WHERE t.b <> 'it''s';",
      "SELECT COUNT(*) INTO c FROM t WHERE -t.a < least(t.b, 4, abs(t.c));",
  };
  for (const char *script : scripts) {
    CAPTURE(script);
    auto first = parse_sql(script);
    REQUIRE(first.size() == 1);
    std::string printed = print_statement(first[0]);
    auto second = parse_sql(printed);
    REQUIRE(second.size() == 1);
    CHECK(print_statement(second[0]) == printed);
  }
}

TEST_CASE("random queries survive the print-parse round trip") {
  Gen gen(246810);
  for (int iter = 0; iter < 200; ++iter) {
    Catalog cat;
    Database db = gen.make_db(cat);
    std::string sql = gen.make_query(cat);
    auto first = parse_sql(sql);
    std::string printed = print_statement(first[0]);
    CAPTURE(sql);
    CAPTURE(printed);
    auto second = parse_sql(printed);
    CHECK(print_statement(second[0]) == printed);
  }
}

TEST_CASE("workflow binding") {
  std::string modelDoc = R"({"pools":[{"id":"p","name":"P","nodes":[
    {"id":"s","kind":"startEvent"},
    {"id":"t1","kind":"task","label":"first","inputs":["a"],"outputs":["mid"]},
    {"id":"t2","kind":"task","label":"second","inputs":["mid"],"outputs":["out"]},
    {"id":"e","kind":"endEvent"}],
    "flows":[["s","t1"],["t1","t2"],["t2","e"]]}],
    "dataObjects":[{"name":"a","pool":"p"},{"name":"mid","pool":"p"},{"name":"out","pool":"p"}]})";
  static model::ProcessModel m = model::load_model(modelDoc);

  Catalog schemas;
  TableSchema a;
  a.name = "a";
  a.columns = {{"x", ColType::Int8}};
  schemas["a"] = a;
  Database data;
  data["a"] = {a, {{std::int64_t{1}}, {std::int64_t{4}}}};

  SUBCASE("binds and orders tasks; evaluates the chain") {
    std::map<std::string, std::string> scripts = {
        {"t2", "SELECT m.v + 1 AS w INTO out FROM mid m WHERE TRUE;"},
        {"t1", "SELECT a.x * 2 AS v INTO mid FROM a WHERE a.x > 1;"},
    };
    SqlWorkflow wf = bind_workflow(m, scripts, schemas, data);
    REQUIRE(wf.tasks.size() == 2);
    CHECK(wf.tasks[0].taskId == "t1");
    CHECK(wf.tasks[1].taskId == "t2");
    CHECK(wf.is_input_table("a"));
    CHECK_FALSE(wf.is_input_table("mid"));
    Database result = wf.evaluate_all();
    REQUIRE(result.at("out").rows.size() == 1);
    CHECK(std::get<std::int64_t>(result.at("out").rows[0][0]) == 9);
  }
  SUBCASE("reading a table outside the task inputs fails") {
    std::map<std::string, std::string> scripts = {
        {"t1", "SELECT b.x AS v INTO mid FROM b WHERE TRUE;"},
        {"t2", "SELECT m.v AS w INTO out FROM mid m WHERE TRUE;"},
    };
    try {
      bind_workflow(m, scripts, schemas, data);
      FAIL("expected unbound-table error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::Binding);
    }
  }
  SUBCASE("writing a table outside the task outputs fails") {
    std::map<std::string, std::string> scripts = {
        {"t1", "SELECT a.x AS v INTO wrong INTO FROM a WHERE TRUE;"},
    };
    CHECK_THROWS_AS(bind_workflow(m, scripts, schemas, data), Error);
  }
  SUBCASE("task with data objects but no script fails") {
    CHECK_THROWS_AS(bind_workflow(m, {}, schemas, data), Error);
  }
}

TEST_CASE("workflow with zero SQL tasks binds empty") {
  std::string modelDoc = R"({"pools":[{"id":"p","name":"P","nodes":[
    {"id":"s","kind":"startEvent"},{"id":"e","kind":"endEvent"}],
    "flows":[["s","e"]]}]})";
  static model::ProcessModel m = model::load_model(modelDoc);
  SqlWorkflow wf = bind_workflow(m, {}, {}, {});
  CHECK(wf.tasks.empty());
}
