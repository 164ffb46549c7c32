#include <algorithm>
#include <sstream>
#include <set>
#include <unordered_map>

#include "sql_lexer.hpp"

namespace pleak::sql {

const char *binary_op_name(BinaryOp op) {
  switch (op) {
  case BinaryOp::Add: return "+";
  case BinaryOp::Sub: return "-";
  case BinaryOp::Mul: return "*";
  case BinaryOp::Div: return "/";
  case BinaryOp::Pow: return "^";
  case BinaryOp::Lt: return "<";
  case BinaryOp::Le: return "<=";
  case BinaryOp::Gt: return ">";
  case BinaryOp::Ge: return ">=";
  case BinaryOp::Eq: return "=";
  case BinaryOp::Ne: return "<>";
  case BinaryOp::And: return "AND";
  case BinaryOp::Or: return "OR";
  }
  return "?";
}

const char *agg_kind_name(AggKind k) {
  switch (k) {
  case AggKind::None: return "none";
  case AggKind::Count: return "count";
  case AggKind::Sum: return "sum";
  case AggKind::Min: return "min";
  case AggKind::Max: return "max";
  }
  return "?";
}

int TableSchema::column_index(const std::string &n) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].first == n)
      return static_cast<int>(i);
  return -1;
}

ExprPtr Expr::clone() const {
  auto e = std::make_unique<Expr>();
  e->kind = kind;
  e->pos = pos;
  e->qualifier = qualifier;
  e->column = column;
  e->sourceIndex = sourceIndex;
  e->columnIndex = columnIndex;
  e->constant = constant;
  e->uop = uop;
  e->bop = bop;
  e->callee = callee;
  e->type = type;
  for (const auto &a : args)
    e->args.push_back(a->clone());
  return e;
}

namespace {

struct Parser {
  std::vector<Token> toks;
  size_t pos = 0;

  const Token &cur() const { return toks[pos]; }
  const Token &peek(size_t n = 1) const { return toks[std::min(pos + n, toks.size() - 1)]; }

  [[noreturn]] void err(const std::string &msg) const {
    const Token &t = cur();
    std::string got = t.kind == TokKind::End ? "end of input" : "\"" + t.text + "\"";
    fail(ErrorKind::SqlSyntax, msg + ", got " + got, t.pos.line, t.pos.col);
  }

  bool at_symbol(const std::string &s) const {
    return cur().kind == TokKind::Symbol && cur().text == s;
  }
  bool at_keyword(const std::string &k) const {
    return cur().kind == TokKind::Keyword && cur().text == k;
  }
  bool eat_symbol(const std::string &s) {
    if (!at_symbol(s))
      return false;
    ++pos;
    return true;
  }
  bool eat_keyword(const std::string &k) {
    if (!at_keyword(k))
      return false;
    ++pos;
    return true;
  }
  void expect_symbol(const std::string &s) {
    if (!eat_symbol(s))
      err("expected \"" + s + "\"");
  }
  void expect_keyword(const std::string &k) {
    if (!eat_keyword(k))
      err("expected " + k);
  }
  std::string expect_ident() {
    if (cur().kind != TokKind::Ident)
      err("expected identifier");
    return toks[pos++].text;
  }

  // Column position after a dot: keywords double as column names there
  // (aggregate outputs are named count/sum/min/max).
  std::string expect_column_name() {
    if (cur().kind == TokKind::Keyword)
      return toks[pos++].raw;
    return expect_ident();
  }

  ColType expect_type() {
    if (cur().kind != TokKind::Keyword)
      err("expected a type (INT8, FLOAT8, TEXT, BOOL)");
    std::string t = toks[pos++].text;
    if (t == "INT8") return ColType::Int8;
    if (t == "FLOAT8") return ColType::Float8;
    if (t == "TEXT") return ColType::Text;
    if (t == "BOOL") return ColType::Bool;
    --pos;
    err("expected a type (INT8, FLOAT8, TEXT, BOOL)");
  }

  // --- expressions -------------------------------------------------------

  ExprPtr make(Expr::Kind k) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->pos = cur().pos;
    return e;
  }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (at_keyword("OR")) {
      SourcePos p = cur().pos;
      ++pos;
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = p;
      e->bop = BinaryOp::Or;
      e->args.push_back(std::move(lhs));
      e->args.push_back(parse_and());
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    while (at_keyword("AND")) {
      SourcePos p = cur().pos;
      ++pos;
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = p;
      e->bop = BinaryOp::And;
      e->args.push_back(std::move(lhs));
      e->args.push_back(parse_not());
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_not() {
    if (at_keyword("NOT")) {
      auto e = make(Expr::Kind::Unary);
      ++pos;
      e->uop = UnaryOp::Not;
      e->args.push_back(parse_not());
      return e;
    }
    return parse_cmp();
  }

  ExprPtr parse_cmp() {
    ExprPtr lhs = parse_add();
    static const std::vector<std::pair<std::string, BinaryOp>> cmps = {
        {"<=", BinaryOp::Le}, {">=", BinaryOp::Ge}, {"<>", BinaryOp::Ne},
        {"<", BinaryOp::Lt},  {">", BinaryOp::Gt},  {"=", BinaryOp::Eq}};
    for (const auto &[sym, op] : cmps) {
      if (at_symbol(sym)) {
        auto e = std::make_unique<Expr>();
        e->kind = Expr::Kind::Binary;
        e->pos = cur().pos;
        ++pos;
        e->bop = op;
        e->args.push_back(std::move(lhs));
        e->args.push_back(parse_add());
        return e;  // comparisons do not chain
      }
    }
    return lhs;
  }

  ExprPtr parse_add() {
    ExprPtr lhs = parse_mul();
    while (at_symbol("+") || at_symbol("-")) {
      BinaryOp op = at_symbol("+") ? BinaryOp::Add : BinaryOp::Sub;
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = cur().pos;
      ++pos;
      e->bop = op;
      e->args.push_back(std::move(lhs));
      e->args.push_back(parse_mul());
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_mul() {
    ExprPtr lhs = parse_unary();
    while (at_symbol("*") || at_symbol("/")) {
      BinaryOp op = at_symbol("*") ? BinaryOp::Mul : BinaryOp::Div;
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = cur().pos;
      ++pos;
      e->bop = op;
      e->args.push_back(std::move(lhs));
      e->args.push_back(parse_unary());
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (at_symbol("-")) {
      auto e = make(Expr::Kind::Unary);
      ++pos;
      e->uop = UnaryOp::Neg;
      e->args.push_back(parse_unary());
      return e;
    }
    return parse_pow();
  }

  ExprPtr parse_pow() {
    ExprPtr base = parse_primary();
    if (at_symbol("^")) {
      auto e = std::make_unique<Expr>();
      e->kind = Expr::Kind::Binary;
      e->pos = cur().pos;
      ++pos;
      e->bop = BinaryOp::Pow;
      e->args.push_back(std::move(base));
      e->args.push_back(parse_unary());  // right associative
      return e;
    }
    return base;
  }

  ExprPtr parse_primary() {
    const Token &t = cur();
    switch (t.kind) {
    case TokKind::IntLit: {
      auto e = make(Expr::Kind::Const);
      e->constant = t.intVal;
      ++pos;
      return e;
    }
    case TokKind::FloatLit: {
      auto e = make(Expr::Kind::Const);
      e->constant = t.floatVal;
      ++pos;
      return e;
    }
    case TokKind::StringLit: {
      auto e = make(Expr::Kind::Const);
      e->constant = t.text;
      ++pos;
      return e;
    }
    case TokKind::Keyword:
      if (t.text == "TRUE" || t.text == "FALSE") {
        auto e = make(Expr::Kind::Const);
        e->constant = (t.text == "TRUE");
        ++pos;
        return e;
      }
      err("expected expression");
    case TokKind::Ident: {
      // function call, qualified column, or bare column
      if (peek().kind == TokKind::Symbol && peek().text == "(") {
        auto e = make(Expr::Kind::Call);
        e->callee = t.text;
        pos += 2;
        if (!at_symbol(")")) {
          e->args.push_back(parse_expr());
          while (eat_symbol(","))
            e->args.push_back(parse_expr());
        }
        expect_symbol(")");
        return e;
      }
      auto e = make(Expr::Kind::Column);
      e->column = t.text;
      ++pos;
      if (eat_symbol(".")) {
        e->qualifier = e->column;
        e->column = expect_column_name();
      }
      return e;
    }
    case TokKind::Symbol:
      if (t.text == "(") {
        ++pos;
        ExprPtr e = parse_expr();
        expect_symbol(")");
        return e;
      }
      err("expected expression");
    default:
      err("expected expression");
    }
  }

  // --- statements --------------------------------------------------------

  Statement parse_create_table() {
    Statement st;
    st.kind = Statement::Kind::CreateTable;
    st.table.name = expect_ident();
    expect_symbol("(");
    std::set<std::string> seen;
    while (true) {
      std::string col = expect_ident();
      ColType ty = expect_type();
      if (!seen.insert(col).second)
        fail(ErrorKind::SqlType, "duplicate column \"" + col + "\" in table " + st.table.name,
             cur().pos.line, cur().pos.col);
      st.table.columns.emplace_back(col, ty);
      if (!eat_symbol(","))
        break;
    }
    expect_symbol(")");
    expect_symbol(";");
    return st;
  }

  Statement parse_create_function() {
    Statement st;
    st.kind = Statement::Kind::CreateFunction;
    auto fn = std::make_shared<FuncDef>();
    fn->name = expect_ident();
    expect_symbol("(");
    if (!at_symbol(")")) {
      while (true) {
        std::string p = expect_ident();
        ColType ty = expect_type();
        fn->params.emplace_back(p, ty);
        if (!eat_symbol(","))
          break;
      }
    }
    expect_symbol(")");
    expect_keyword("RETURNS");
    fn->returnType = expect_type();
    expect_keyword("AS");
    fn->body = parse_expr();
    expect_symbol(";");
    st.func = fn;
    return st;
  }

  Statement parse_select() {
    Statement st;
    st.kind = Statement::Kind::Select;
    auto q = std::make_shared<SelectQuery>();
    q->pos = toks[pos - 1].pos;
    q->distinct = eat_keyword("DISTINCT");

    if (at_keyword("COUNT")) {
      ++pos;
      expect_symbol("(");
      expect_symbol("*");
      expect_symbol(")");
      q->aggregation = AggKind::Count;
    } else if (at_keyword("SUM") || at_keyword("MIN") || at_keyword("MAX")) {
      q->aggregation = at_keyword("SUM") ? AggKind::Sum
                       : at_keyword("MIN") ? AggKind::Min
                                           : AggKind::Max;
      ++pos;
      expect_symbol("(");
      q->aggArg = parse_expr();
      expect_symbol(")");
    } else {
      while (true) {
        ExprPtr e = parse_expr();
        std::string alias;
        if (eat_keyword("AS"))
          alias = expect_ident();
        else if (e->kind == Expr::Kind::Column)
          alias = e->column;
        else
          alias = "col" + std::to_string(q->projections.size());
        q->projections.emplace_back(std::move(e), alias);
        if (!eat_symbol(","))
          break;
      }
    }
    if (q->distinct && q->aggregation != AggKind::None)
      fail(ErrorKind::SqlSyntax, "DISTINCT cannot be combined with an aggregation",
           q->pos.line, q->pos.col);

    expect_keyword("INTO");
    q->intoTable = expect_ident();
    expect_keyword("FROM");
    while (true) {
      std::string table = expect_ident();
      std::string alias = table;
      if (eat_keyword("AS"))
        alias = expect_ident();
      else if (cur().kind == TokKind::Ident)
        alias = expect_ident();
      q->sources.emplace_back(table, alias);
      if (!eat_symbol(","))
        break;
    }
    expect_keyword("WHERE");
    q->predicate = parse_expr();
    expect_symbol(";");
    st.select = q;
    return st;
  }

  std::vector<Statement> parse_script() {
    std::vector<Statement> out;
    while (cur().kind != TokKind::End) {
      if (eat_keyword("CREATE")) {
        if (eat_keyword("TABLE"))
          out.push_back(parse_create_table());
        else if (eat_keyword("FUNCTION"))
          out.push_back(parse_create_function());
        else
          err("expected TABLE or FUNCTION after CREATE");
      } else if (eat_keyword("SELECT")) {
        out.push_back(parse_select());
      } else {
        err("expected CREATE or SELECT");
      }
    }
    return out;
  }
};

// Type-checks a function body: only parameters may be referenced.
void check_function(FuncDef &fn);

ColType resolve_expr(Expr &e, const std::vector<std::pair<std::string, TableSchema>> &sources,
                     const FuncMap &funcs,
                     const std::vector<std::pair<std::string, ColType>> *params);

ColType numeric_join(ColType a, ColType b, const SourcePos &pos) {
  if (!is_numeric(a) || !is_numeric(b))
    fail(ErrorKind::SqlType, "arithmetic requires numeric operands", pos.line, pos.col);
  return (a == ColType::Float8 || b == ColType::Float8) ? ColType::Float8 : ColType::Int8;
}

ColType resolve_call(Expr &e, const std::vector<std::pair<std::string, TableSchema>> &sources,
                     const FuncMap &funcs,
                     const std::vector<std::pair<std::string, ColType>> *params) {
  std::vector<ColType> argTypes;
  for (auto &a : e.args)
    argTypes.push_back(resolve_expr(*a, sources, funcs, params));

  const std::string &f = e.callee;
  if (f == "sqrt" || f == "abs") {
    if (e.args.size() != 1 || !is_numeric(argTypes[0]))
      fail(ErrorKind::SqlType, f + " expects one numeric argument", e.pos.line, e.pos.col);
    return f == "sqrt" ? ColType::Float8 : argTypes[0];
  }
  if (f == "least" || f == "greatest") {
    if (e.args.size() < 2)
      fail(ErrorKind::SqlType, f + " expects at least two arguments", e.pos.line, e.pos.col);
    ColType t = argTypes[0];
    for (size_t i = 1; i < argTypes.size(); ++i)
      t = numeric_join(t, argTypes[i], e.pos);
    return t;
  }
  auto it = funcs.find(f);
  if (it == funcs.end())
    fail(ErrorKind::UnknownIdentifier, "unknown function \"" + f + "\"", e.pos.line, e.pos.col);
  const FuncDef &fn = *it->second;
  if (fn.params.size() != e.args.size())
    fail(ErrorKind::SqlType,
         "function " + f + " expects " + std::to_string(fn.params.size()) + " arguments",
         e.pos.line, e.pos.col);
  for (size_t i = 0; i < e.args.size(); ++i) {
    ColType want = fn.params[i].second;
    ColType got = argTypes[i];
    bool ok = want == got || (want == ColType::Float8 && got == ColType::Int8);
    if (!ok)
      fail(ErrorKind::SqlType,
           "argument " + std::to_string(i + 1) + " of " + f + " expects " + type_name(want),
           e.args[i]->pos.line, e.args[i]->pos.col);
  }
  return fn.returnType;
}

ColType resolve_expr(Expr &e, const std::vector<std::pair<std::string, TableSchema>> &sources,
                     const FuncMap &funcs,
                     const std::vector<std::pair<std::string, ColType>> *params) {
  switch (e.kind) {
  case Expr::Kind::Const:
    e.type = value_type(e.constant);
    return e.type;
  case Expr::Kind::Column: {
    if (params) {
      // Function bodies resolve against the parameter list only.
      if (!e.qualifier.empty())
        fail(ErrorKind::UnknownIdentifier,
             "qualified reference \"" + e.qualifier + "." + e.column + "\" in function body",
             e.pos.line, e.pos.col);
      for (size_t i = 0; i < params->size(); ++i)
        if ((*params)[i].first == e.column) {
          e.sourceIndex = -1;
          e.columnIndex = static_cast<int>(i);
          e.type = (*params)[i].second;
          return e.type;
        }
      fail(ErrorKind::UnknownIdentifier, "unknown parameter \"" + e.column + "\"",
           e.pos.line, e.pos.col);
    }
    int found = -1, foundCol = -1;
    for (size_t s = 0; s < sources.size(); ++s) {
      if (!e.qualifier.empty() && sources[s].first != e.qualifier)
        continue;
      int ci = sources[s].second.column_index(e.column);
      if (ci >= 0) {
        if (found >= 0)
          fail(ErrorKind::SqlType, "ambiguous column \"" + e.column + "\"", e.pos.line,
               e.pos.col);
        found = static_cast<int>(s);
        foundCol = ci;
      }
    }
    if (found < 0)
      fail(ErrorKind::UnknownIdentifier,
           "unknown column \"" + (e.qualifier.empty() ? e.column : e.qualifier + "." + e.column) +
               "\"",
           e.pos.line, e.pos.col);
    e.sourceIndex = found;
    e.columnIndex = foundCol;
    e.type = sources[found].second.columns[foundCol].second;
    return e.type;
  }
  case Expr::Kind::Unary: {
    ColType t = resolve_expr(*e.args[0], sources, funcs, params);
    if (e.uop == UnaryOp::Neg) {
      if (!is_numeric(t))
        fail(ErrorKind::SqlType, "unary minus requires a numeric operand", e.pos.line, e.pos.col);
      e.type = t;
    } else {
      if (t != ColType::Bool)
        fail(ErrorKind::SqlType, "NOT requires a boolean operand", e.pos.line, e.pos.col);
      e.type = ColType::Bool;
    }
    return e.type;
  }
  case Expr::Kind::Binary: {
    ColType a = resolve_expr(*e.args[0], sources, funcs, params);
    ColType b = resolve_expr(*e.args[1], sources, funcs, params);
    switch (e.bop) {
    case BinaryOp::Add:
    case BinaryOp::Sub:
    case BinaryOp::Mul:
    case BinaryOp::Div:
      e.type = numeric_join(a, b, e.pos);
      return e.type;
    case BinaryOp::Pow:
      numeric_join(a, b, e.pos);
      e.type = ColType::Float8;  // real-valued power
      return e.type;
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge:
      if (is_numeric(a) && is_numeric(b)) {
      } else if (a == ColType::Text && b == ColType::Text) {
      } else {
        fail(ErrorKind::SqlType, "incomparable operand types", e.pos.line, e.pos.col);
      }
      e.type = ColType::Bool;
      return e.type;
    case BinaryOp::Eq:
    case BinaryOp::Ne:
      if ((is_numeric(a) && is_numeric(b)) || a == b) {
        e.type = ColType::Bool;
        return e.type;
      }
      fail(ErrorKind::SqlType, "incomparable operand types", e.pos.line, e.pos.col);
    case BinaryOp::And:
    case BinaryOp::Or:
      if (a != ColType::Bool || b != ColType::Bool)
        fail(ErrorKind::SqlType, "AND/OR require boolean operands", e.pos.line, e.pos.col);
      e.type = ColType::Bool;
      return e.type;
    }
    fail(ErrorKind::SqlType, "bad binary operator", e.pos.line, e.pos.col);
  }
  case Expr::Kind::Call:
    e.type = resolve_call(e, sources, funcs, params);
    return e.type;
  }
  fail(ErrorKind::SqlType, "bad expression", e.pos.line, e.pos.col);
}

void check_function(FuncDef &fn) {
  ColType t = resolve_expr(*fn.body, {}, {}, &fn.params);
  bool ok = t == fn.returnType || (fn.returnType == ColType::Float8 && t == ColType::Int8);
  if (!ok)
    fail(ErrorKind::SqlType,
         "function " + fn.name + " body has type " + type_name(t) + ", declared " +
             type_name(fn.returnType),
         fn.body->pos.line, fn.body->pos.col);
}

} // namespace

std::vector<Statement> parse_sql(const std::string &text) {
  Parser p;
  p.toks = lex_sql(text);
  std::vector<Statement> stmts = p.parse_script();
  for (auto &st : stmts)
    if (st.kind == Statement::Kind::CreateFunction)
      check_function(*st.func);
  return stmts;
}

std::string print_expr(const Expr &e) {
  switch (e.kind) {
  case Expr::Kind::Const:
    if (std::holds_alternative<std::string>(e.constant)) {
      std::string out = "'";
      for (char c : std::get<std::string>(e.constant)) {
        if (c == '\'')
          out += '\'';
        out += c;
      }
      return out + "'";
    }
    if (std::holds_alternative<bool>(e.constant))
      return std::get<bool>(e.constant) ? "TRUE" : "FALSE";
    if (std::holds_alternative<double>(e.constant)) {
      std::ostringstream os;
      os.precision(17);
      os << std::get<double>(e.constant);
      std::string s = os.str();
      if (s.find('.') == std::string::npos && s.find('e') == std::string::npos)
        s += ".0";
      return s;
    }
    return std::to_string(std::get<std::int64_t>(e.constant));
  case Expr::Kind::Column:
    return e.qualifier.empty() ? e.column : e.qualifier + "." + e.column;
  case Expr::Kind::Unary:
    if (e.uop == UnaryOp::Not)
      return "NOT (" + print_expr(*e.args[0]) + ")";
    return "-(" + print_expr(*e.args[0]) + ")";
  case Expr::Kind::Binary:
    return "(" + print_expr(*e.args[0]) + " " + binary_op_name(e.bop) + " " +
           print_expr(*e.args[1]) + ")";
  case Expr::Kind::Call: {
    std::string out = e.callee + "(";
    for (size_t i = 0; i < e.args.size(); ++i)
      out += (i ? ", " : "") + print_expr(*e.args[i]);
    return out + ")";
  }
  }
  return "?";
}

std::string print_statement(const Statement &st) {
  std::ostringstream os;
  switch (st.kind) {
  case Statement::Kind::CreateTable: {
    os << "CREATE TABLE " << st.table.name << " (";
    for (size_t i = 0; i < st.table.columns.size(); ++i)
      os << (i ? ", " : "") << st.table.columns[i].first << " "
         << type_name(st.table.columns[i].second);
    os << ");";
    break;
  }
  case Statement::Kind::CreateFunction: {
    os << "CREATE FUNCTION " << st.func->name << "(";
    for (size_t i = 0; i < st.func->params.size(); ++i)
      os << (i ? ", " : "") << st.func->params[i].first << " "
         << type_name(st.func->params[i].second);
    os << ") RETURNS " << type_name(st.func->returnType) << " AS "
       << print_expr(*st.func->body) << ";";
    break;
  }
  case Statement::Kind::Select: {
    const SelectQuery &q = *st.select;
    os << "SELECT ";
    if (q.distinct)
      os << "DISTINCT ";
    switch (q.aggregation) {
    case AggKind::None:
      for (size_t i = 0; i < q.projections.size(); ++i)
        os << (i ? ", " : "") << print_expr(*q.projections[i].first) << " AS "
           << q.projections[i].second;
      break;
    case AggKind::Count:
      os << "COUNT(*)";
      break;
    default:
      os << (q.aggregation == AggKind::Sum ? "SUM" : q.aggregation == AggKind::Min ? "MIN" : "MAX")
         << "(" << print_expr(*q.aggArg) << ")";
    }
    os << " INTO " << q.intoTable << " FROM ";
    for (size_t i = 0; i < q.sources.size(); ++i) {
      os << (i ? ", " : "") << q.sources[i].first;
      if (q.sources[i].second != q.sources[i].first)
        os << " " << q.sources[i].second;
    }
    os << " WHERE " << print_expr(*q.predicate) << ";";
    break;
  }
  }
  return os.str();
}

TableSchema resolve_select(SelectQuery &q, const Catalog &catalog, const FuncMap &funcs) {
  std::vector<std::pair<std::string, TableSchema>> sources;
  std::set<std::string> aliases;
  for (const auto &[table, alias] : q.sources) {
    auto it = catalog.find(table);
    if (it == catalog.end())
      fail(ErrorKind::UnknownIdentifier, "unknown table \"" + table + "\"", q.pos.line,
           q.pos.col);
    if (!aliases.insert(alias).second)
      fail(ErrorKind::SqlType, "duplicate source alias \"" + alias + "\"", q.pos.line, q.pos.col);
    sources.emplace_back(alias, it->second);
  }

  ColType predType = resolve_expr(*q.predicate, sources, funcs, nullptr);
  if (predType != ColType::Bool)
    fail(ErrorKind::SqlType, "WHERE predicate must be boolean", q.predicate->pos.line,
         q.predicate->pos.col);

  TableSchema out;
  out.name = q.intoTable;
  switch (q.aggregation) {
  case AggKind::None:
    for (auto &[expr, alias] : q.projections) {
      ColType t = resolve_expr(*expr, sources, funcs, nullptr);
      out.columns.emplace_back(alias, t);
    }
    break;
  case AggKind::Count:
    out.columns.emplace_back("count", ColType::Int8);
    break;
  case AggKind::Sum:
  case AggKind::Min:
  case AggKind::Max: {
    ColType t = resolve_expr(*q.aggArg, sources, funcs, nullptr);
    if (!is_numeric(t))
      fail(ErrorKind::SqlType, "aggregation operand must be numeric", q.aggArg->pos.line,
           q.aggArg->pos.col);
    out.columns.emplace_back(agg_kind_name(q.aggregation), t);
    break;
  }
  }
  return out;
}

} // namespace pleak::sql
