#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "pleak/sql.hpp"

namespace pleak {

std::string value_to_string(const Value &v) {
  switch (v.index()) {
  case 0: return std::to_string(std::get<std::int64_t>(v));
  case 1: {
    std::ostringstream os;
    os.precision(15);
    os << std::get<double>(v);
    return os.str();
  }
  case 2: return std::get<std::string>(v);
  default: return std::get<bool>(v) ? "true" : "false";
  }
}

} // namespace pleak

namespace pleak::sql {

namespace {

// --- CSV ------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string &line, int lineNo) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    fail(ErrorKind::CsvFormat, "unterminated quoted field", lineNo, 1);
  fields.push_back(cur);
  return fields;
}

Value parse_cell(const std::string &text, ColType type, int line, int col) {
  try {
    switch (type) {
    case ColType::Int8: {
      size_t used = 0;
      std::int64_t v = std::stoll(text, &used);
      if (used != text.size())
        throw std::invalid_argument("trailing");
      return v;
    }
    case ColType::Float8: {
      size_t used = 0;
      double v = std::stod(text, &used);
      if (used != text.size())
        throw std::invalid_argument("trailing");
      return v;
    }
    case ColType::Text:
      return text;
    case ColType::Bool:
      if (text == "true" || text == "TRUE" || text == "1")
        return true;
      if (text == "false" || text == "FALSE" || text == "0")
        return false;
      throw std::invalid_argument("bool");
    }
  } catch (const std::exception &) {
    fail(ErrorKind::CsvFormat,
         "cannot read \"" + text + "\" as " + type_name(type), line, col);
  }
  fail(ErrorKind::CsvFormat, "bad cell", line, col);
}

} // namespace

TableData load_table_data(const TableSchema &schema, const std::string &csvText) {
  TableData out;
  out.schema = schema;

  std::vector<std::string> lines;
  std::string cur;
  for (char c : csvText) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r')
        cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty())
    lines.push_back(cur);
  if (lines.empty())
    fail(ErrorKind::CsvFormat, "missing header row for table " + schema.name, 1, 1);

  std::vector<std::string> header = split_csv_line(lines[0], 1);
  if (header.size() != schema.columns.size())
    fail(ErrorKind::CsvFormat,
         "header has " + std::to_string(header.size()) + " columns, schema of " + schema.name +
             " has " + std::to_string(schema.columns.size()),
         1, 1);
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] != schema.columns[i].first)
      fail(ErrorKind::CsvFormat,
           "header column \"" + header[i] + "\" does not match schema column \"" +
               schema.columns[i].first + "\"",
           1, static_cast<int>(i + 1));

  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty())
      continue;
    std::vector<std::string> fields = split_csv_line(lines[ln], static_cast<int>(ln + 1));
    if (fields.size() != schema.columns.size())
      fail(ErrorKind::CsvFormat,
           "row has " + std::to_string(fields.size()) + " fields, expected " +
               std::to_string(schema.columns.size()),
           static_cast<int>(ln + 1), 1);
    std::vector<Value> row;
    for (size_t i = 0; i < fields.size(); ++i)
      row.push_back(parse_cell(fields[i], schema.columns[i].second, static_cast<int>(ln + 1),
                               static_cast<int>(i + 1)));
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string table_to_csv(const TableData &data) {
  std::ostringstream os;
  for (size_t i = 0; i < data.schema.columns.size(); ++i)
    os << (i ? "," : "") << data.schema.columns[i].first;
  os << "\n";
  for (const auto &row : data.rows) {
    for (size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << value_to_string(row[i]);
    os << "\n";
  }
  return os.str();
}

// --- evaluation -------------------------------------------------------------

namespace {

struct EvalCtx {
  const std::vector<const TableData *> *tables = nullptr;
  const std::vector<size_t> *rowIdx = nullptr;
  const FuncMap *funcs = nullptr;
  const std::vector<Value> *fnArgs = nullptr;  // active function frame
};

Value eval_expr(const Expr &e, const EvalCtx &ctx);

double num(const Value &v) { return as_double(v); }

Value eval_call(const Expr &e, const EvalCtx &ctx) {
  std::vector<Value> args;
  args.reserve(e.args.size());
  for (const auto &a : e.args)
    args.push_back(eval_expr(*a, ctx));

  const std::string &f = e.callee;
  if (f == "sqrt") {
    double x = num(args[0]);
    if (x < 0)
      fail(ErrorKind::Evaluation, "sqrt of negative value", e.pos.line, e.pos.col);
    return std::sqrt(x);
  }
  if (f == "abs") {
    if (e.type == ColType::Int8)
      return std::int64_t(std::llabs(std::get<std::int64_t>(args[0])));
    return std::fabs(num(args[0]));
  }
  if (f == "least" || f == "greatest") {
    bool wantMin = f == "least";
    if (e.type == ColType::Int8) {
      std::int64_t best = std::get<std::int64_t>(args[0]);
      for (size_t i = 1; i < args.size(); ++i) {
        std::int64_t v = std::get<std::int64_t>(args[i]);
        best = wantMin ? std::min(best, v) : std::max(best, v);
      }
      return best;
    }
    double best = num(args[0]);
    for (size_t i = 1; i < args.size(); ++i)
      best = wantMin ? std::min(best, num(args[i])) : std::max(best, num(args[i]));
    return best;
  }
  const FuncDef &fn = *ctx.funcs->at(f);
  EvalCtx inner = ctx;
  inner.fnArgs = &args;
  return eval_expr(*fn.body, inner);
}

Value eval_expr(const Expr &e, const EvalCtx &ctx) {
  switch (e.kind) {
  case Expr::Kind::Const:
    return e.constant;
  case Expr::Kind::Column: {
    if (e.sourceIndex < 0) {
      // function parameter
      return (*ctx.fnArgs)[e.columnIndex];
    }
    const TableData &t = *(*ctx.tables)[e.sourceIndex];
    return t.rows[(*ctx.rowIdx)[e.sourceIndex]][e.columnIndex];
  }
  case Expr::Kind::Unary: {
    Value v = eval_expr(*e.args[0], ctx);
    if (e.uop == UnaryOp::Not)
      return !as_bool(v);
    if (e.type == ColType::Int8)
      return -std::get<std::int64_t>(v);
    return -num(v);
  }
  case Expr::Kind::Binary: {
    if (e.bop == BinaryOp::And) {
      if (!as_bool(eval_expr(*e.args[0], ctx)))
        return false;
      return as_bool(eval_expr(*e.args[1], ctx));
    }
    if (e.bop == BinaryOp::Or) {
      if (as_bool(eval_expr(*e.args[0], ctx)))
        return true;
      return as_bool(eval_expr(*e.args[1], ctx));
    }
    Value a = eval_expr(*e.args[0], ctx);
    Value b = eval_expr(*e.args[1], ctx);
    switch (e.bop) {
    case BinaryOp::Add:
      if (e.type == ColType::Int8)
        return std::get<std::int64_t>(a) + std::get<std::int64_t>(b);
      return num(a) + num(b);
    case BinaryOp::Sub:
      if (e.type == ColType::Int8)
        return std::get<std::int64_t>(a) - std::get<std::int64_t>(b);
      return num(a) - num(b);
    case BinaryOp::Mul:
      if (e.type == ColType::Int8)
        return std::get<std::int64_t>(a) * std::get<std::int64_t>(b);
      return num(a) * num(b);
    case BinaryOp::Div: {
      double db = num(b);
      if (db == 0)
        fail(ErrorKind::DivisionByZero, "division by zero", e.pos.line, e.pos.col);
      if (e.type == ColType::Int8)
        return static_cast<std::int64_t>(std::trunc(num(a) / db));
      return num(a) / db;
    }
    case BinaryOp::Pow:
      return std::pow(num(a), num(b));
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: {
      int c;
      if (std::holds_alternative<std::string>(a))
        c = std::get<std::string>(a).compare(std::get<std::string>(b));
      else
        c = num(a) < num(b) ? -1 : num(a) > num(b) ? 1 : 0;
      switch (e.bop) {
      case BinaryOp::Lt: return c < 0;
      case BinaryOp::Le: return c <= 0;
      case BinaryOp::Gt: return c > 0;
      default: return c >= 0;
      }
    }
    case BinaryOp::Eq:
    case BinaryOp::Ne: {
      bool eq;
      if (std::holds_alternative<std::string>(a))
        eq = std::get<std::string>(a) == std::get<std::string>(b);
      else if (std::holds_alternative<bool>(a))
        eq = std::get<bool>(a) == as_bool(b);
      else
        eq = num(a) == num(b);
      return e.bop == BinaryOp::Eq ? eq : !eq;
    }
    default:
      fail(ErrorKind::Evaluation, "bad operator", e.pos.line, e.pos.col);
    }
  }
  case Expr::Kind::Call:
    return eval_call(e, ctx);
  }
  fail(ErrorKind::Evaluation, "bad expression", e.pos.line, e.pos.col);
}

std::string row_name(const SelectQuery &q, const std::vector<size_t> &idx) {
  std::string s;
  for (size_t i = 0; i < q.sources.size(); ++i) {
    if (i)
      s += ", ";
    s += q.sources[i].second + "[" + std::to_string(idx[i]) + "]";
  }
  return s;
}

} // namespace

TableData eval_query(const SelectQuery &q, const Database &db, const FuncMap &funcs) {
  // The query must have been resolved (resolve_select) before evaluation.
  std::vector<const TableData *> tables;
  for (const auto &[table, alias] : q.sources) {
    auto it = db.find(table);
    if (it == db.end())
      fail(ErrorKind::UnknownIdentifier, "no data for table \"" + table + "\"");
    tables.push_back(&it->second);
  }

  TableData out;
  out.schema.name = q.intoTable;
  if (q.aggregation == AggKind::None) {
    for (const auto &[expr, alias] : q.projections)
      out.schema.columns.emplace_back(alias, expr->type);
  } else if (q.aggregation == AggKind::Count) {
    out.schema.columns.emplace_back("count", ColType::Int8);
  } else {
    out.schema.columns.emplace_back(agg_kind_name(q.aggregation), q.aggArg->type);
  }

  EvalCtx ctx;
  std::vector<size_t> idx(q.sources.size(), 0);
  ctx.tables = &tables;
  ctx.rowIdx = &idx;
  ctx.funcs = &funcs;

  std::int64_t count = 0;
  double sumF = 0;
  std::int64_t sumI = 0;
  bool any = false;
  double bestF = 0;
  std::int64_t bestI = 0;

  // Nested-loop cross join over all sources.
  bool empty = false;
  for (const auto *t : tables)
    empty = empty || t->rows.empty();

  if (!empty) {
    while (true) {
      bool pass;
      try {
        pass = as_bool(eval_expr(*q.predicate, ctx));
      } catch (Error &e) {
        if (e.kind() == ErrorKind::DivisionByZero)
          throw Error(ErrorKind::DivisionByZero,
                      std::string(e.what()) + " at rows (" + row_name(q, idx) + ")");
        throw;
      }
      if (pass) {
        switch (q.aggregation) {
        case AggKind::None: {
          std::vector<Value> row;
          for (const auto &[expr, alias] : q.projections)
            row.push_back(eval_expr(*expr, ctx));
          out.rows.push_back(std::move(row));
          break;
        }
        case AggKind::Count:
          ++count;
          break;
        case AggKind::Sum: {
          Value v = eval_expr(*q.aggArg, ctx);
          if (q.aggArg->type == ColType::Int8)
            sumI += std::get<std::int64_t>(v);
          else
            sumF += as_double(v);
          break;
        }
        case AggKind::Min:
        case AggKind::Max: {
          Value v = eval_expr(*q.aggArg, ctx);
          bool better;
          if (q.aggArg->type == ColType::Int8) {
            std::int64_t x = std::get<std::int64_t>(v);
            better = !any || (q.aggregation == AggKind::Min ? x < bestI : x > bestI);
            if (better)
              bestI = x;
          } else {
            double x = as_double(v);
            better = !any || (q.aggregation == AggKind::Min ? x < bestF : x > bestF);
            if (better)
              bestF = x;
          }
          any = true;
          break;
        }
        }
      }
      // advance the cross-join cursor
      size_t s = 0;
      for (; s < idx.size(); ++s) {
        if (++idx[s] < tables[s]->rows.size())
          break;
        idx[s] = 0;
      }
      if (s == idx.size())
        break;
    }
  }

  switch (q.aggregation) {
  case AggKind::None:
    if (q.distinct) {
      std::set<std::vector<Value>> seen;
      std::vector<std::vector<Value>> dedup;
      for (auto &row : out.rows)
        if (seen.insert(row).second)
          dedup.push_back(row);
      out.rows = std::move(dedup);
    }
    break;
  case AggKind::Count:
    out.rows.push_back({count});
    break;
  case AggKind::Sum:
    if (q.aggArg->type == ColType::Int8)
      out.rows.push_back({sumI});
    else
      out.rows.push_back({sumF});
    break;
  case AggKind::Min:
  case AggKind::Max:
    if (!any)
      fail(ErrorKind::EmptyAggregate,
           std::string(q.aggregation == AggKind::Min ? "MIN" : "MAX") + " over an empty set");
    if (q.aggArg->type == ColType::Int8)
      out.rows.push_back({bestI});
    else
      out.rows.push_back({bestF});
    break;
  }
  return out;
}

} // namespace pleak::sql
