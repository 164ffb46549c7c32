#include "pleak/symexec.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace pleak::symexec {

namespace {

std::string value_key(const Value &v) {
  switch (v.index()) {
  case 0: return "i" + std::to_string(std::get<std::int64_t>(v));
  case 1: {
    std::ostringstream os;
    os.precision(17);
    os << "f" << std::get<double>(v);
    return os.str();
  }
  case 2: return "s" + std::get<std::string>(v);
  default: return std::get<bool>(v) ? "b1" : "b0";
  }
}

} // namespace

NodeId DagBuilder::intern(DagNode n) {
  std::ostringstream key;
  key << static_cast<int>(n.kind) << '|' << static_cast<int>(n.arith) << '|'
      << static_cast<int>(n.cmp) << '|' << static_cast<int>(n.boolean) << '|'
      << static_cast<int>(n.agg) << '|';
  for (NodeId c : n.children)
    key << c << ',';
  key << '|' << n.table << '|' << n.column << '|' << n.rowSym << '|' << value_key(n.constant)
      << '|' << n.func << '|' << n.distinct << '|';
  for (const auto &rb : n.scope)
    key << rb.table << '#' << rb.rowSym << ',';

  auto it = consTable_.find(key.str());
  if (it != consTable_.end())
    return it->second;
  NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(n));
  consTable_.emplace(key.str(), id);
  return id;
}

NodeId DagBuilder::input_attr(const std::string &table, const std::string &column, int rowSym,
                              ColType type) {
  DagNode n;
  n.kind = DagKind::InputAttr;
  n.table = table;
  n.column = column;
  n.rowSym = rowSym;
  n.attrType = type;
  return intern(std::move(n));
}

NodeId DagBuilder::constant(Value v) {
  DagNode n;
  n.kind = DagKind::Const;
  n.constant = std::move(v);
  return intern(std::move(n));
}

NodeId DagBuilder::arith(ArithOp op, std::vector<NodeId> children) {
  DagNode n;
  n.kind = DagKind::Arith;
  n.arith = op;
  n.children = std::move(children);
  return intern(std::move(n));
}

NodeId DagBuilder::cmp(CmpOp op, NodeId lhs, NodeId rhs) {
  DagNode n;
  n.kind = DagKind::Cmp;
  n.cmp = op;
  n.children = {lhs, rhs};
  return intern(std::move(n));
}

NodeId DagBuilder::boolean(BoolOp op, std::vector<NodeId> children) {
  DagNode n;
  n.kind = DagKind::Bool;
  n.boolean = op;
  n.children = std::move(children);
  return intern(std::move(n));
}

NodeId DagBuilder::func_app(const std::string &name, std::vector<NodeId> args, ColType type) {
  DagNode n;
  n.kind = DagKind::FuncApp;
  n.func = name;
  n.attrType = type;
  n.children = std::move(args);
  return intern(std::move(n));
}

NodeId DagBuilder::aggregate(sql::AggKind kind, NodeId value, NodeId condition,
                             std::vector<RowBinding> scope) {
  DagNode n;
  n.kind = DagKind::Agg;
  n.agg = kind;
  n.children = {value, condition};
  n.scope = std::move(scope);
  return intern(std::move(n));
}

NodeId DagBuilder::filter(NodeId value, NodeId condition, std::vector<RowBinding> scope,
                          bool distinct) {
  DagNode n;
  n.kind = DagKind::Filter;
  n.children = {value, condition};
  n.scope = std::move(scope);
  n.distinct = distinct;
  return intern(std::move(n));
}

std::vector<NodeId> DagBuilder::reachable(const std::vector<NodeId> &roots) const {
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<NodeId> stack = roots;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (seen[id])
      continue;
    seen[id] = true;
    for (NodeId c : nodes_[id].children)
      stack.push_back(c);
  }
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (seen[i])
      out.push_back(i);
  return out;
}

std::vector<NodeId> DagBuilder::input_leaves(NodeId root) const {
  std::vector<NodeId> out;
  for (NodeId id : reachable({root}))
    if (nodes_[id].kind == DagKind::InputAttr)
      out.push_back(id);
  return out;
}

namespace {

bool is_const(const DagNode &n) { return n.kind == DagKind::Const; }

bool const_bool(const DagNode &n) { return std::get<bool>(n.constant); }

bool is_const_number(const DagNode &n, double v) {
  if (n.kind != DagKind::Const)
    return false;
  if (std::holds_alternative<std::int64_t>(n.constant))
    return static_cast<double>(std::get<std::int64_t>(n.constant)) == v;
  if (std::holds_alternative<double>(n.constant))
    return std::get<double>(n.constant) == v;
  return false;
}

} // namespace

NodeId DagBuilder::simplify(NodeId root) {
  auto memo = simplified_.find(root);
  if (memo != simplified_.end())
    return memo->second;

  const DagNode n = nodes_[root];  // copy: nodes_ may reallocate below
  std::vector<NodeId> ch;
  ch.reserve(n.children.size());
  for (NodeId c : n.children)
    ch.push_back(simplify(c));

  NodeId result = kNoNode;
  auto all_const = [&] {
    for (NodeId c : ch)
      if (!is_const(nodes_[c]))
        return false;
    return !ch.empty();
  };

  switch (n.kind) {
  case DagKind::InputAttr:
  case DagKind::Const:
    result = root;
    break;

  case DagKind::Arith: {
    if (all_const()) {
      // fold numerics; keep int arithmetic exact where both sides are ints
      bool allInt = true;
      for (NodeId c : ch)
        allInt = allInt && std::holds_alternative<std::int64_t>(nodes_[c].constant);
      auto f = [&](NodeId c) { return as_double(nodes_[c].constant); };
      double v = 0;
      bool representable = true;
      switch (n.arith) {
      case ArithOp::Add: v = f(ch[0]) + f(ch[1]); break;
      case ArithOp::Sub: v = f(ch[0]) - f(ch[1]); break;
      case ArithOp::Mul: v = f(ch[0]) * f(ch[1]); break;
      case ArithOp::Div:
        if (f(ch[1]) == 0) { representable = false; break; }  // keep the error for runtime
        v = f(ch[0]) / f(ch[1]);
        if (allInt) v = std::trunc(v);
        break;
      case ArithOp::Pow: v = std::pow(f(ch[0]), f(ch[1])); allInt = false; break;
      case ArithOp::Neg: v = -f(ch[0]); break;
      }
      if (representable) {
        result = allInt && n.arith != ArithOp::Pow
                     ? constant(static_cast<std::int64_t>(v))
                     : constant(v);
        break;
      }
    }
    if (n.arith == ArithOp::Add) {
      if (is_const_number(nodes_[ch[0]], 0)) { result = ch[1]; break; }
      if (is_const_number(nodes_[ch[1]], 0)) { result = ch[0]; break; }
    }
    if (n.arith == ArithOp::Sub && is_const_number(nodes_[ch[1]], 0)) { result = ch[0]; break; }
    if (n.arith == ArithOp::Mul) {
      if (is_const_number(nodes_[ch[0]], 1)) { result = ch[1]; break; }
      if (is_const_number(nodes_[ch[1]], 1)) { result = ch[0]; break; }
      if (is_const_number(nodes_[ch[0]], 0) || is_const_number(nodes_[ch[1]], 0)) {
        result = constant(std::int64_t{0});
        break;
      }
    }
    if (n.arith == ArithOp::Div && is_const_number(nodes_[ch[1]], 1)) { result = ch[0]; break; }
    if (n.arith == ArithOp::Pow && is_const_number(nodes_[ch[1]], 1)) { result = ch[0]; break; }
    result = arith(n.arith, ch);
    break;
  }

  case DagKind::Cmp: {
    if (all_const()) {
      const Value &a = nodes_[ch[0]].constant;
      const Value &b = nodes_[ch[1]].constant;
      bool textCmp = std::holds_alternative<std::string>(a);
      int c;
      if (textCmp)
        c = std::get<std::string>(a).compare(std::get<std::string>(b));
      else if (std::holds_alternative<bool>(a))
        c = (std::get<bool>(a) ? 1 : 0) - (as_bool(b) ? 1 : 0);
      else
        c = as_double(a) < as_double(b) ? -1 : as_double(a) > as_double(b) ? 1 : 0;
      bool v = false;
      switch (n.cmp) {
      case CmpOp::Lt: v = c < 0; break;
      case CmpOp::Le: v = c <= 0; break;
      case CmpOp::Gt: v = c > 0; break;
      case CmpOp::Ge: v = c >= 0; break;
      case CmpOp::Eq: v = c == 0; break;
      case CmpOp::Ne: v = c != 0; break;
      }
      result = constant(v);
      break;
    }
    result = cmp(n.cmp, ch[0], ch[1]);
    break;
  }

  case DagKind::Bool: {
    if (n.boolean == BoolOp::Not) {
      if (is_const(nodes_[ch[0]])) {
        result = constant(!const_bool(nodes_[ch[0]]));
        break;
      }
      result = boolean(BoolOp::Not, ch);
      break;
    }
    bool isAnd = n.boolean == BoolOp::And;
    std::vector<NodeId> kept;
    bool shortCircuit = false;
    for (NodeId c : ch) {
      if (is_const(nodes_[c])) {
        bool v = const_bool(nodes_[c]);
        if (isAnd && !v) { shortCircuit = true; break; }
        if (!isAnd && v) { shortCircuit = true; break; }
        continue;  // neutral element
      }
      kept.push_back(c);
    }
    if (shortCircuit) {
      result = constant(!isAnd);
      break;
    }
    if (kept.empty())
      result = constant(isAnd);
    else if (kept.size() == 1)
      result = kept[0];
    else
      result = boolean(n.boolean, kept);
    break;
  }

  case DagKind::FuncApp: {
    if (all_const()) {
      auto f = [&](NodeId c) { return as_double(nodes_[c].constant); };
      if (n.func == "sqrt" && f(ch[0]) >= 0) {
        result = constant(std::sqrt(f(ch[0])));
        break;
      }
      if (n.func == "abs") {
        result = constant(std::fabs(f(ch[0])));
        break;
      }
      if (n.func == "least" || n.func == "greatest") {
        double best = f(ch[0]);
        for (size_t i = 1; i < ch.size(); ++i)
          best = n.func == "least" ? std::min(best, f(ch[i])) : std::max(best, f(ch[i]));
        result = constant(best);
        break;
      }
    }
    result = func_app(n.func, ch, n.attrType);
    break;
  }

  case DagKind::Agg:
    result = aggregate(n.agg, ch[0], ch[1], n.scope);
    break;
  case DagKind::Filter:
    result = filter(ch[0], ch[1], n.scope, n.distinct);
    break;
  }

  simplified_[root] = result;
  simplified_[result] = result;  // idempotence
  return result;
}

Value DagBuilder::evaluate(
    NodeId id, const Binding &binding,
    const std::unordered_map<std::string, const sql::TableSchema *> &schemas) const {
  const DagNode &n = nodes_[id];
  switch (n.kind) {
  case DagKind::Const:
    return n.constant;
  case DagKind::InputAttr: {
    const std::vector<Value> *row = binding.at(n.table + "#" + std::to_string(n.rowSym));
    int ci = schemas.at(n.table)->column_index(n.column);
    return (*row)[ci];
  }
  case DagKind::Arith: {
    if (n.arith == ArithOp::Neg) {
      Value v = evaluate(n.children[0], binding, schemas);
      if (std::holds_alternative<std::int64_t>(v))
        return -std::get<std::int64_t>(v);
      return -as_double(v);
    }
    Value a = evaluate(n.children[0], binding, schemas);
    Value b = evaluate(n.children[1], binding, schemas);
    bool bothInt = std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b);
    double x = as_double(a), y = as_double(b);
    switch (n.arith) {
    case ArithOp::Add: if (bothInt) return std::get<std::int64_t>(a) + std::get<std::int64_t>(b); return x + y;
    case ArithOp::Sub: if (bothInt) return std::get<std::int64_t>(a) - std::get<std::int64_t>(b); return x - y;
    case ArithOp::Mul: if (bothInt) return std::get<std::int64_t>(a) * std::get<std::int64_t>(b); return x * y;
    case ArithOp::Div:
      if (y == 0)
        fail(ErrorKind::DivisionByZero, "division by zero in provenance evaluation");
      if (bothInt)
        return static_cast<std::int64_t>(std::trunc(x / y));
      return x / y;
    case ArithOp::Pow: return std::pow(x, y);
    default: break;
    }
    fail(ErrorKind::Evaluation, "bad arithmetic node");
  }
  case DagKind::Cmp: {
    Value a = evaluate(n.children[0], binding, schemas);
    Value b = evaluate(n.children[1], binding, schemas);
    int c;
    if (std::holds_alternative<std::string>(a))
      c = std::get<std::string>(a).compare(std::get<std::string>(b));
    else if (std::holds_alternative<bool>(a))
      c = (std::get<bool>(a) ? 1 : 0) - (as_bool(b) ? 1 : 0);
    else
      c = as_double(a) < as_double(b) ? -1 : as_double(a) > as_double(b) ? 1 : 0;
    switch (n.cmp) {
    case CmpOp::Lt: return c < 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Gt: return c > 0;
    case CmpOp::Ge: return c >= 0;
    case CmpOp::Eq: return c == 0;
    case CmpOp::Ne: return c != 0;
    }
    fail(ErrorKind::Evaluation, "bad comparison node");
  }
  case DagKind::Bool: {
    if (n.boolean == BoolOp::Not)
      return !as_bool(evaluate(n.children[0], binding, schemas));
    bool isAnd = n.boolean == BoolOp::And;
    for (NodeId c : n.children) {
      bool v = as_bool(evaluate(c, binding, schemas));
      if (isAnd && !v)
        return false;
      if (!isAnd && v)
        return true;
    }
    return isAnd;
  }
  case DagKind::FuncApp: {
    std::vector<double> args;
    for (NodeId c : n.children)
      args.push_back(as_double(evaluate(c, binding, schemas)));
    if (n.func == "sqrt") {
      if (args[0] < 0)
        fail(ErrorKind::Evaluation, "sqrt of negative value");
      return std::sqrt(args[0]);
    }
    if (n.func == "abs")
      return std::fabs(args[0]);
    if (n.func == "least" || n.func == "greatest") {
      double best = args[0];
      for (size_t i = 1; i < args.size(); ++i)
        best = n.func == "least" ? std::min(best, args[i]) : std::max(best, args[i]);
      return best;
    }
    fail(ErrorKind::Evaluation, "unknown builtin \"" + n.func + "\"");
  }
  case DagKind::Agg:
  case DagKind::Filter:
    fail(ErrorKind::Evaluation, "aggregate/filter nodes need scope enumeration to evaluate");
  }
  fail(ErrorKind::Evaluation, "bad node");
}

// --- symbolic execution -----------------------------------------------------

namespace {

// A table during symbolic execution: either a base input table or the
// symbolic result of a query.
struct SymTable {
  bool isBase = true;
  sql::TableSchema schema;
  // Derived only:
  std::vector<RowBinding> scope;          // base-table row symbols in play
  std::vector<NodeId> columns;            // value DAG per column
  NodeId condition = kNoNode;
  bool aggregated = false;                // single-row aggregate result
  bool distinct = false;
};

struct SymExec {
  const sql::SqlWorkflow &wf;
  DagBuilder &dag;
  std::unordered_map<std::string, SymTable> tables;
  int nextRowSym = 0;

  SymExec(const sql::SqlWorkflow &w, DagBuilder &d) : wf(w), dag(d) {
    for (const auto &name : w.inputTables) {
      SymTable t;
      t.isBase = true;
      t.schema = w.schemas.at(name);
      tables.emplace(name, std::move(t));
    }
  }

  // Instantiates a source table for a query: a base table contributes a fresh
  // row symbol; a derived table is spliced in with fresh symbols so that
  // separate uses stay independent.
  struct SourceInst {
    std::vector<RowBinding> scope;
    std::vector<NodeId> columns;
    NodeId condition;
    const sql::TableSchema *schema;
  };

  NodeId rename(NodeId id, const std::unordered_map<int, int> &symMap,
                std::unordered_map<NodeId, NodeId> &memo) {
    auto it = memo.find(id);
    if (it != memo.end())
      return it->second;
    const DagNode n = dag.node(id);
    NodeId result;
    if (n.kind == DagKind::InputAttr) {
      auto sit = symMap.find(n.rowSym);
      result = sit == symMap.end()
                   ? id
                   : dag.input_attr(n.table, n.column, sit->second, n.attrType);
    } else if (n.kind == DagKind::Const) {
      result = id;
    } else {
      std::vector<NodeId> ch;
      for (NodeId c : n.children)
        ch.push_back(rename(c, symMap, memo));
      switch (n.kind) {
      case DagKind::Arith: result = dag.arith(n.arith, ch); break;
      case DagKind::Cmp: result = dag.cmp(n.cmp, ch[0], ch[1]); break;
      case DagKind::Bool: result = dag.boolean(n.boolean, ch); break;
      case DagKind::FuncApp: result = dag.func_app(n.func, ch, n.attrType); break;
      case DagKind::Agg: {
        std::vector<RowBinding> scope = n.scope;
        for (auto &rb : scope) {
          auto sit = symMap.find(rb.rowSym);
          if (sit != symMap.end())
            rb.rowSym = sit->second;
        }
        result = dag.aggregate(n.agg, ch[0], ch[1], std::move(scope));
        break;
      }
      default:
        fail(ErrorKind::Evaluation, "unexpected node during renaming");
      }
    }
    memo.emplace(id, result);
    return result;
  }

  std::unordered_map<std::string, int> useCount;

  SourceInst instantiate(const std::string &tableName) {
    auto it = tables.find(tableName);
    if (it == tables.end())
      fail(ErrorKind::Binding, "symbolic execution reached unknown table \"" + tableName + "\"");
    SymTable &t = it->second;
    SourceInst inst;
    inst.schema = &t.schema;
    if (t.isBase) {
      int sym = nextRowSym++;
      inst.scope = {{tableName, sym}};
      for (const auto &[col, ty] : t.schema.columns)
        inst.columns.push_back(dag.input_attr(tableName, col, sym, ty));
      inst.condition = dag.constant(true);
      return inst;
    }
    if (t.aggregated) {
      // Aggregation results are closed scalars; consuming them adds no scope.
      inst.scope = {};
      inst.columns = t.columns;
      inst.condition = dag.constant(true);
      return inst;
    }
    // The first use keeps the original row symbols, so downstream conditions
    // share the upstream condition nodes; later uses get fresh symbols to
    // stay independent.
    if (useCount[tableName]++ == 0) {
      inst.scope = t.scope;
      inst.columns = t.columns;
      inst.condition = t.condition;
      return inst;
    }
    std::unordered_map<int, int> symMap;
    for (const auto &rb : t.scope) {
      symMap[rb.rowSym] = nextRowSym++;
      inst.scope.push_back({rb.table, symMap[rb.rowSym]});
    }
    std::unordered_map<NodeId, NodeId> memo;
    for (NodeId c : t.columns)
      inst.columns.push_back(rename(c, symMap, memo));
    inst.condition = rename(t.condition, symMap, memo);
    return inst;
  }

  // Translates a resolved SQL expression into the DAG, substituting source
  // columns with their symbolic values.
  NodeId translate(const sql::Expr &e, const std::vector<SourceInst> &sources) {
    using sql::Expr;
    switch (e.kind) {
    case Expr::Kind::Const:
      return dag.constant(e.constant);
    case Expr::Kind::Column:
      return sources[e.sourceIndex].columns[e.columnIndex];
    case Expr::Kind::Unary: {
      NodeId a = translate(*e.args[0], sources);
      if (e.uop == sql::UnaryOp::Not)
        return dag.boolean(BoolOp::Not, {a});
      return dag.arith(ArithOp::Neg, {a});
    }
    case Expr::Kind::Binary: {
      NodeId a = translate(*e.args[0], sources);
      NodeId b = translate(*e.args[1], sources);
      switch (e.bop) {
      case sql::BinaryOp::Add: return dag.arith(ArithOp::Add, {a, b});
      case sql::BinaryOp::Sub: return dag.arith(ArithOp::Sub, {a, b});
      case sql::BinaryOp::Mul: return dag.arith(ArithOp::Mul, {a, b});
      case sql::BinaryOp::Div: return dag.arith(ArithOp::Div, {a, b});
      case sql::BinaryOp::Pow: return dag.arith(ArithOp::Pow, {a, b});
      case sql::BinaryOp::Lt: return dag.cmp(CmpOp::Lt, a, b);
      case sql::BinaryOp::Le: return dag.cmp(CmpOp::Le, a, b);
      case sql::BinaryOp::Gt: return dag.cmp(CmpOp::Gt, a, b);
      case sql::BinaryOp::Ge: return dag.cmp(CmpOp::Ge, a, b);
      case sql::BinaryOp::Eq: return dag.cmp(CmpOp::Eq, a, b);
      case sql::BinaryOp::Ne: return dag.cmp(CmpOp::Ne, a, b);
      case sql::BinaryOp::And: return dag.boolean(BoolOp::And, {a, b});
      case sql::BinaryOp::Or: return dag.boolean(BoolOp::Or, {a, b});
      }
      fail(ErrorKind::Evaluation, "bad operator");
    }
    case Expr::Kind::Call: {
      // User functions are inlined so only base attributes remain as leaves.
      auto fit = wf.funcs.find(e.callee);
      if (fit == wf.funcs.end()) {
        std::vector<NodeId> args;
        for (const auto &a : e.args)
          args.push_back(translate(*a, sources));
        return dag.func_app(e.callee, std::move(args), e.type);
      }
      const sql::FuncDef &fn = *fit->second;
      std::vector<NodeId> argDags;
      for (const auto &a : e.args)
        argDags.push_back(translate(*a, sources));
      return inline_function(*fn.body, argDags);
    }
    }
    fail(ErrorKind::Evaluation, "bad expression");
  }

  NodeId inline_function(const sql::Expr &body, const std::vector<NodeId> &argDags) {
    using sql::Expr;
    switch (body.kind) {
    case Expr::Kind::Const:
      return dag.constant(body.constant);
    case Expr::Kind::Column:
      return argDags[body.columnIndex];  // parameter reference
    case Expr::Kind::Unary: {
      NodeId a = inline_function(*body.args[0], argDags);
      if (body.uop == sql::UnaryOp::Not)
        return dag.boolean(BoolOp::Not, {a});
      return dag.arith(ArithOp::Neg, {a});
    }
    case Expr::Kind::Binary: {
      NodeId a = inline_function(*body.args[0], argDags);
      NodeId b = inline_function(*body.args[1], argDags);
      switch (body.bop) {
      case sql::BinaryOp::Add: return dag.arith(ArithOp::Add, {a, b});
      case sql::BinaryOp::Sub: return dag.arith(ArithOp::Sub, {a, b});
      case sql::BinaryOp::Mul: return dag.arith(ArithOp::Mul, {a, b});
      case sql::BinaryOp::Div: return dag.arith(ArithOp::Div, {a, b});
      case sql::BinaryOp::Pow: return dag.arith(ArithOp::Pow, {a, b});
      case sql::BinaryOp::Lt: return dag.cmp(CmpOp::Lt, a, b);
      case sql::BinaryOp::Le: return dag.cmp(CmpOp::Le, a, b);
      case sql::BinaryOp::Gt: return dag.cmp(CmpOp::Gt, a, b);
      case sql::BinaryOp::Ge: return dag.cmp(CmpOp::Ge, a, b);
      case sql::BinaryOp::Eq: return dag.cmp(CmpOp::Eq, a, b);
      case sql::BinaryOp::Ne: return dag.cmp(CmpOp::Ne, a, b);
      case sql::BinaryOp::And: return dag.boolean(BoolOp::And, {a, b});
      case sql::BinaryOp::Or: return dag.boolean(BoolOp::Or, {a, b});
      }
      fail(ErrorKind::Evaluation, "bad operator");
    }
    case Expr::Kind::Call: {
      auto fit = wf.funcs.find(body.callee);
      std::vector<NodeId> args;
      for (const auto &a : body.args)
        args.push_back(inline_function(*a, argDags));
      if (fit == wf.funcs.end())
        return dag.func_app(body.callee, std::move(args), body.type);
      return inline_function(*fit->second->body, args);
    }
    }
    fail(ErrorKind::Evaluation, "bad expression");
  }

  void exec_query(const sql::SelectQuery &q) {
    std::vector<SourceInst> sources;
    std::vector<RowBinding> scope;
    std::vector<NodeId> conds;
    for (const auto &[table, alias] : q.sources) {
      SourceInst inst = instantiate(table);
      for (const auto &rb : inst.scope)
        scope.push_back(rb);
      if (!(dag.node(inst.condition).kind == DagKind::Const &&
            const_bool(dag.node(inst.condition))))
        conds.push_back(inst.condition);
      sources.push_back(std::move(inst));
    }
    NodeId pred = translate(*q.predicate, sources);
    conds.push_back(pred);
    NodeId condition = conds.size() == 1 ? conds[0] : dag.boolean(BoolOp::And, conds);

    SymTable out;
    out.isBase = false;
    out.schema = wf.schemas.at(q.intoTable);
    out.distinct = q.distinct;
    if (q.aggregation == sql::AggKind::None) {
      out.scope = scope;
      out.condition = condition;
      for (const auto &[expr, alias] : q.projections)
        out.columns.push_back(translate(*expr, sources));
    } else {
      NodeId value = q.aggArg ? translate(*q.aggArg, sources) : dag.constant(std::int64_t{1});
      out.aggregated = true;
      out.scope = {};
      out.condition = dag.constant(true);
      out.columns = {dag.aggregate(q.aggregation, value, condition, scope)};
    }
    tables[q.intoTable] = std::move(out);
  }
};

} // namespace

std::vector<ColumnProvenance> symbolic_run(const sql::SqlWorkflow &wf, const model::Run &run,
                                           const std::vector<std::string> &targets,
                                           DagBuilder &dag, int runIndex) {
  SymExec exec(wf, dag);

  std::set<std::string> runTasks(run.taskIds.begin(), run.taskIds.end());
  for (const auto &task : wf.tasks) {
    if (!runTasks.count(task.taskId))
      continue;
    for (const auto &q : task.queries)
      exec.exec_query(*q);
  }

  std::vector<ColumnProvenance> out;
  for (const auto &target : targets) {
    auto it = exec.tables.find(target);
    if (it == exec.tables.end() || it->second.isBase)
      fail(ErrorKind::Binding, "target \"" + target + "\" is not produced in this run");
    const SymTable &t = it->second;
    for (size_t c = 0; c < t.columns.size(); ++c) {
      ColumnProvenance prov;
      prov.outputTable = target;
      prov.column = static_cast<int>(c);
      prov.columnName = t.schema.columns[c].first;
      prov.run = runIndex;
      NodeId cond = t.aggregated ? dag.constant(true) : t.condition;
      prov.root = dag.filter(t.columns[c], cond, t.scope, t.distinct);
      out.push_back(std::move(prov));
    }
  }
  return out;
}

} // namespace pleak::symexec
