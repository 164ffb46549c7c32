#include "pleak/leakswhen.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;
using namespace pleak::symexec;

namespace pleak::leakswhen {

Format parse_format(const std::string &name) {
  if (name == "dot") return Format::Dot;
  if (name == "json") return Format::Json;
  if (name == "text") return Format::Text;
  fail(ErrorKind::UnknownFormat, "unknown leaks-when format \"" + name + "\"");
}

namespace {

std::vector<AttrRef> leaf_attrs(const DagBuilder &dag, NodeId root) {
  std::set<AttrRef> set;
  for (NodeId id : dag.input_leaves(root)) {
    const DagNode &n = dag.node(id);
    set.insert({n.table, n.column});
  }
  return {set.begin(), set.end()};
}

} // namespace

LeaksWhenReport leaks_when(const sql::SqlWorkflow &wf, const std::vector<std::string> &targets,
                           int runCap) {
  if (targets.empty())
    fail(ErrorKind::Binding, "leaks-when needs at least one target output object");
  for (const auto &t : targets)
    if (std::find(wf.outputTables.begin(), wf.outputTables.end(), t) == wf.outputTables.end())
      fail(ErrorKind::Binding, "target \"" + t + "\" is not an output of any task");

  LeaksWhenReport report;
  report.targets = targets;

  std::vector<model::Run> runs = model::enumerate_runs(*wf.processModel, runCap);
  for (size_t r = 0; r < runs.size(); ++r) {
    // Targets whose producer is excluded by this run's XOR choices get no
    // entry for this run.
    std::set<std::string> producedHere;
    std::set<std::string> runTasks(runs[r].taskIds.begin(), runs[r].taskIds.end());
    for (const auto &task : wf.tasks)
      if (runTasks.count(task.taskId))
        for (const auto &q : task.queries)
          producedHere.insert(q->intoTable);
    std::vector<std::string> runTargets;
    for (const auto &t : targets)
      if (producedHere.count(t))
        runTargets.push_back(t);
    if (runTargets.empty())
      continue;

    auto provs = symbolic_run(wf, runs[r], runTargets, report.dag, static_cast<int>(r));
    for (auto &p : provs) {
      NodeId simplified = report.dag.simplify(p.root);
      const DagNode &root = report.dag.node(simplified);
      ColumnEntry e;
      e.outputObject = p.outputTable;
      e.column = p.column;
      e.columnName = p.columnName;
      e.run = p.run;
      e.root = simplified;
      e.leak = root.children[0];
      e.when = root.children[1];
      e.distinct = root.distinct;
      e.leakInputs = leaf_attrs(report.dag, e.leak);
      e.whenInputs = leaf_attrs(report.dag, e.when);
      report.entries.push_back(std::move(e));
    }
  }

  // Stable presentation order: target tab order, then column, then run.
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [&](const ColumnEntry &a, const ColumnEntry &b) {
                     auto ta = std::find(targets.begin(), targets.end(), a.outputObject);
                     auto tb = std::find(targets.begin(), targets.end(), b.outputObject);
                     if (ta != tb)
                       return ta < tb;
                     if (a.column != b.column)
                       return a.column < b.column;
                     return a.run < b.run;
                   });
  return report;
}

namespace {

std::string dot_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\';
    out += c;
  }
  return out;
}

std::string node_label(const DagNode &n) {
  switch (n.kind) {
  case DagKind::Filter: return "filter";
  case DagKind::Agg: return sql::agg_kind_name(n.agg);
  case DagKind::InputAttr: return n.table + "." + n.column + " [r" + std::to_string(n.rowSym) + "]";
  case DagKind::Const: return value_to_string(n.constant);
  case DagKind::FuncApp: return n.func;
  case DagKind::Arith:
    switch (n.arith) {
    case ArithOp::Add: return "+";
    case ArithOp::Sub: return "-";
    case ArithOp::Mul: return "*";
    case ArithOp::Div: return "/";
    case ArithOp::Pow: return "^";
    case ArithOp::Neg: return "neg";
    }
    break;
  case DagKind::Cmp:
    switch (n.cmp) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "<>";
    }
    break;
  case DagKind::Bool:
    switch (n.boolean) {
    case BoolOp::And: return "and";
    case BoolOp::Or: return "or";
    case BoolOp::Not: return "not";
    }
    break;
  }
  return "?";
}

std::string entry_graph_name(const ColumnEntry &e) {
  return e.outputObject + "_" + std::to_string(e.column) + "_" + std::to_string(e.run);
}

} // namespace

std::string render_entry_dot(const LeaksWhenReport &report, const ColumnEntry &e) {
  const DagBuilder &dag = report.dag;
  std::ostringstream os;
  os << "digraph \"" << dot_escape(entry_graph_name(e)) << "\" {\n";
  os << "  rankdir=BT;\n";
  for (NodeId id : dag.reachable({e.root})) {
    const DagNode &n = dag.node(id);
    os << "  n" << id << " [label=\"" << dot_escape(node_label(n)) << "\"";
    if (n.kind == DagKind::InputAttr)
      os << ", shape=box, style=dashed";
    else if (n.kind == DagKind::Filter)
      os << ", shape=box";
    os << "];\n";
  }
  // Edge order matters: the first input of a filter is what leaks, the
  // second is when it leaks.
  for (NodeId id : dag.reachable({e.root})) {
    const DagNode &n = dag.node(id);
    for (size_t i = 0; i < n.children.size(); ++i) {
      os << "  n" << n.children[i] << " -> n" << id;
      if (n.kind == DagKind::Filter || n.kind == DagKind::Agg)
        os << " [label=\"" << (i + 1) << "\"]";
      os << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

namespace {

json node_to_json(const DagBuilder &dag, NodeId id) {
  const DagNode &n = dag.node(id);
  json j;
  j["id"] = id;
  switch (n.kind) {
  case DagKind::InputAttr:
    j["kind"] = "input";
    j["table"] = n.table;
    j["column"] = n.column;
    j["row"] = n.rowSym;
    break;
  case DagKind::Const:
    j["kind"] = "const";
    j["value"] = value_to_string(n.constant);
    break;
  case DagKind::Arith:
    j["kind"] = "arith";
    j["op"] = node_label(n);
    break;
  case DagKind::Cmp:
    j["kind"] = "cmp";
    j["op"] = node_label(n);
    break;
  case DagKind::Bool:
    j["kind"] = "bool";
    j["op"] = node_label(n);
    break;
  case DagKind::FuncApp:
    j["kind"] = "func";
    j["op"] = n.func;
    break;
  case DagKind::Agg: {
    j["kind"] = "agg";
    j["op"] = sql::agg_kind_name(n.agg);
    json scope = json::array();
    for (const auto &rb : n.scope)
      scope.push_back(rb.table + "#" + std::to_string(rb.rowSym));
    j["scope"] = scope;
    break;
  }
  case DagKind::Filter: {
    j["kind"] = "filter";
    j["distinct"] = n.distinct;
    json scope = json::array();
    for (const auto &rb : n.scope)
      scope.push_back(rb.table + "#" + std::to_string(rb.rowSym));
    j["scope"] = scope;
    break;
  }
  }
  if (!n.children.empty())
    j["children"] = n.children;
  return j;
}

void text_node(const DagBuilder &dag, NodeId id, std::ostringstream &os) {
  const DagNode &n = dag.node(id);
  if (n.kind == DagKind::InputAttr) {
    os << n.table << "." << n.column << "#r" << n.rowSym;
    return;
  }
  if (n.kind == DagKind::Const) {
    os << value_to_string(n.constant);
    return;
  }
  os << "(" << node_label(n);
  for (NodeId c : n.children) {
    os << " ";
    text_node(dag, c, os);
  }
  os << ")";
}

} // namespace

std::string render(const LeaksWhenReport &report, Format format) {
  switch (format) {
  case Format::Dot: {
    std::ostringstream os;
    for (const auto &e : report.entries)
      os << render_entry_dot(report, e);
    return os.str();
  }
  case Format::Json: {
    json doc;
    doc["schemaVersion"] = 1;
    doc["reports"] = json::array();
    std::vector<NodeId> roots;
    for (const auto &e : report.entries) {
      json r;
      r["output"] = e.outputObject;
      r["column"] = e.column;
      r["columnName"] = e.columnName;
      r["run"] = e.run;
      r["leak"] = e.leak;
      r["when"] = e.when;
      r["distinct"] = e.distinct;
      json li = json::array(), wi = json::array();
      for (const auto &a : e.leakInputs)
        li.push_back(a.table + "." + a.column);
      for (const auto &a : e.whenInputs)
        wi.push_back(a.table + "." + a.column);
      r["leakInputs"] = li;
      r["whenInputs"] = wi;
      doc["reports"].push_back(r);
      roots.push_back(e.root);
    }
    json nodes = json::array();
    for (NodeId id : report.dag.reachable(roots))
      nodes.push_back(node_to_json(report.dag, id));
    doc["nodes"] = nodes;
    return doc.dump(2) + "\n";
  }
  case Format::Text: {
    std::ostringstream os;
    for (const auto &e : report.entries) {
      os << e.outputObject << "(" << e.column << ") run " << e.run << " [" << e.columnName
         << "]\n";
      os << "  leaks: ";
      text_node(report.dag, e.leak, os);
      os << "\n  when:  ";
      text_node(report.dag, e.when, os);
      os << "\n";
    }
    return os.str();
  }
  }
  fail(ErrorKind::UnknownFormat, "bad format");
}

} // namespace pleak::leakswhen
