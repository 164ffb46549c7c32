#pragma once

// Shared scaffolding for the workflow-level test suites: quick construction
// of straight-line SQL workflows and a brute-force evaluator for provenance
// DAGs (the independent oracle for symbolic execution).

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pleak/symexec.hpp"

namespace testutil {

struct TaskSpec {
  std::string id;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

inline std::string line_model_json(const std::vector<TaskSpec> &tasks) {
  std::string nodes = R"({"id":"start","kind":"startEvent"})";
  std::string flows;
  std::string prev = "start";
  for (const auto &t : tasks) {
    nodes += R"(,{"id":")" + t.id + R"(","kind":"task","label":")" + t.id + R"(","inputs":[)";
    for (size_t i = 0; i < t.inputs.size(); ++i)
      nodes += (i ? "," : "") + std::string("\"") + t.inputs[i] + "\"";
    nodes += R"(],"outputs":[)";
    for (size_t i = 0; i < t.outputs.size(); ++i)
      nodes += (i ? "," : "") + std::string("\"") + t.outputs[i] + "\"";
    nodes += "]}";
    flows += (flows.empty() ? "" : ",") + std::string("[\"") + prev + "\",\"" + t.id + "\"]";
    prev = t.id;
  }
  nodes += R"(,{"id":"end","kind":"endEvent"})";
  flows += ",[\"" + prev + "\",\"end\"]";
  return R"({"pools":[{"id":"p","name":"Analyst","nodes":[)" + nodes + R"(],"flows":[)" + flows +
         "]}]}";
}

// Builds a bound workflow over one pool with the given per-task scripts.
// The model is kept alive inside the returned pair.
struct OwnedWorkflow {
  std::shared_ptr<pleak::model::ProcessModel> model;
  pleak::sql::SqlWorkflow wf;
};

inline OwnedWorkflow make_workflow(const std::vector<TaskSpec> &tasks,
                                   const std::map<std::string, std::string> &scripts,
                                   const pleak::sql::Catalog &schemas,
                                   const pleak::sql::Database &data) {
  OwnedWorkflow out;
  out.model = std::make_shared<pleak::model::ProcessModel>(
      pleak::model::load_model(line_model_json(tasks)));
  out.wf = pleak::sql::bind_workflow(*out.model, scripts, schemas, data);
  out.wf.processModel = out.model.get();
  return out;
}

// Brute-force evaluation of one provenance root over concrete instances:
// enumerates every combination of input rows in the DAG scope, keeps value
// rows whose condition holds, and folds aggregates directly.
struct ProvenanceOracle {
  const pleak::symexec::DagBuilder &dag;
  const pleak::sql::SqlWorkflow &wf;
  std::unordered_map<std::string, const pleak::sql::TableSchema *> schemas;

  ProvenanceOracle(const pleak::symexec::DagBuilder &d, const pleak::sql::SqlWorkflow &w)
      : dag(d), wf(w) {
    for (const auto &[name, schema] : wf.schemas)
      schemas[name] = &schema;
  }

  // Evaluates a scalar node under a binding, folding Agg nodes by scope
  // enumeration.
  pleak::Value eval_node(pleak::symexec::NodeId id,
                         pleak::symexec::DagBuilder::Binding &binding) const {
    using namespace pleak::symexec;
    const DagNode &n = dag.node(id);
    if (n.kind == DagKind::Agg)
      return eval_agg(n, binding);
    if (n.children.empty() || n.kind == DagKind::InputAttr || n.kind == DagKind::Const)
      return dag.evaluate(id, binding, schemas);
    // non-leaf: children may contain Agg nodes; evaluate via substitution
    for (NodeId c : n.children)
      if (contains_agg(c))
        return eval_composite(n, binding);
    return dag.evaluate(id, binding, schemas);
  }

  bool contains_agg(pleak::symexec::NodeId id) const {
    using namespace pleak::symexec;
    const DagNode &n = dag.node(id);
    if (n.kind == DagKind::Agg)
      return true;
    for (NodeId c : n.children)
      if (contains_agg(c))
        return true;
    return false;
  }

  pleak::Value eval_composite(const pleak::symexec::DagNode &n,
                              pleak::symexec::DagBuilder::Binding &binding) const {
    // only needed for expressions over aggregate results; fold children first
    using namespace pleak::symexec;
    std::vector<double> vals;
    for (NodeId c : n.children)
      vals.push_back(pleak::as_double(eval_node(c, binding)));
    switch (n.kind) {
    case DagKind::Arith:
      switch (n.arith) {
      case ArithOp::Add: return vals[0] + vals[1];
      case ArithOp::Sub: return vals[0] - vals[1];
      case ArithOp::Mul: return vals[0] * vals[1];
      case ArithOp::Div: return vals[0] / vals[1];
      case ArithOp::Pow: return std::pow(vals[0], vals[1]);
      case ArithOp::Neg: return -vals[0];
      }
      break;
    case DagKind::Cmp: {
      int c = vals[0] < vals[1] ? -1 : vals[0] > vals[1] ? 1 : 0;
      switch (n.cmp) {
      case CmpOp::Lt: return c < 0;
      case CmpOp::Le: return c <= 0;
      case CmpOp::Gt: return c > 0;
      case CmpOp::Ge: return c >= 0;
      case CmpOp::Eq: return c == 0;
      case CmpOp::Ne: return c != 0;
      }
      break;
    }
    default:
      break;
    }
    throw pleak::Error(pleak::ErrorKind::Evaluation, "oracle: unsupported composite");
  }

  pleak::Value eval_agg(const pleak::symexec::DagNode &agg,
                        pleak::symexec::DagBuilder::Binding &binding) const {
    using namespace pleak::symexec;
    long count = 0;
    double sum = 0;
    std::int64_t sumI = 0;
    bool isInt = true;
    bool any = false;
    double best = 0;
    enumerate(agg.scope, binding, [&](DagBuilder::Binding &b) {
      if (!pleak::as_bool(eval_node(agg.children[1], b)))
        return;
      ++count;
      if (agg.agg == pleak::sql::AggKind::Count)
        return;
      pleak::Value v = eval_node(agg.children[0], b);
      double x = pleak::as_double(v);
      if (!std::holds_alternative<std::int64_t>(v))
        isInt = false;
      else
        sumI += std::get<std::int64_t>(v);
      sum += x;
      if (!any || (agg.agg == pleak::sql::AggKind::Min ? x < best : x > best))
        best = x;
      any = true;
    });
    switch (agg.agg) {
    case pleak::sql::AggKind::Count:
      return std::int64_t(count);
    case pleak::sql::AggKind::Sum:
      return isInt ? pleak::Value{sumI} : pleak::Value{sum};
    case pleak::sql::AggKind::Min:
    case pleak::sql::AggKind::Max:
      if (!any)
        throw pleak::Error(pleak::ErrorKind::EmptyAggregate, "oracle: empty aggregate");
      return isInt ? pleak::Value{std::int64_t(best)} : pleak::Value{best};
    default:
      throw pleak::Error(pleak::ErrorKind::Evaluation, "oracle: bad aggregate");
    }
  }

  template <typename Fn>
  void enumerate(const std::vector<pleak::symexec::RowBinding> &scope,
                 pleak::symexec::DagBuilder::Binding &binding, Fn &&fn) const {
    std::vector<const pleak::sql::TableData *> tables;
    for (const auto &rb : scope)
      tables.push_back(&wf.data.at(rb.table));
    std::vector<size_t> idx(scope.size(), 0);
    bool empty = false;
    for (const auto *t : tables)
      empty = empty || t->rows.empty();
    if (empty)
      return;
    while (true) {
      for (size_t s = 0; s < scope.size(); ++s)
        binding[scope[s].table + "#" + std::to_string(scope[s].rowSym)] =
            &tables[s]->rows[idx[s]];
      fn(binding);
      size_t s = 0;
      for (; s < scope.size(); ++s) {
        if (++idx[s] < tables[s]->rows.size())
          break;
        idx[s] = 0;
      }
      if (s == scope.size())
        break;
    }
    for (const auto &rb : scope)
      binding.erase(rb.table + "#" + std::to_string(rb.rowSym));
  }

  // Full reconstruction of an output table from its column provenances
  // (all must share one run and scope). Returns projected rows.
  std::vector<std::vector<pleak::Value>>
  rebuild_rows(const std::vector<pleak::symexec::ColumnProvenance> &cols) {
    using namespace pleak::symexec;
    std::vector<std::vector<pleak::Value>> rows;
    const DagNode &root0 = dag.node(cols[0].root);
    DagBuilder::Binding binding;
    if (dag.node(root0.children[0]).kind == DagKind::Agg) {
      std::vector<pleak::Value> row;
      for (const auto &c : cols)
        row.push_back(eval_node(dag.node(c.root).children[0], binding));
      rows.push_back(std::move(row));
      return rows;
    }
    enumerate(root0.scope, binding, [&](DagBuilder::Binding &b) {
      if (!pleak::as_bool(eval_node(root0.children[1], b)))
        return;
      std::vector<pleak::Value> row;
      for (const auto &c : cols)
        row.push_back(eval_node(dag.node(c.root).children[0], b));
      rows.push_back(std::move(row));
    });
    if (root0.distinct) {
      std::set<std::vector<pleak::Value>> dedup(rows.begin(), rows.end());
      rows.assign(dedup.begin(), dedup.end());
    }
    return rows;
  }
};

} // namespace testutil
