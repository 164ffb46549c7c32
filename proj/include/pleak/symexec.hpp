#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pleak/sql.hpp"

namespace pleak::symexec {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffff;

enum class DagKind : std::uint8_t {
  InputAttr,  // leaf: (table, column, row symbol)
  Const,
  Arith,      // + - * / ^ and unary -
  Cmp,        // < <= > >= = <>
  Bool,       // AND OR NOT
  FuncApp,    // builtin: sqrt abs least greatest
  Agg,        // aggregation over a symbolic row scope
  Filter,     // provenance root: (value, condition) over a row scope
};

enum class ArithOp : std::uint8_t { Add, Sub, Mul, Div, Pow, Neg };
enum class CmpOp : std::uint8_t { Lt, Le, Gt, Ge, Eq, Ne };
enum class BoolOp : std::uint8_t { And, Or, Not };

// One symbolic row of a base table inside a provenance scope.
struct RowBinding {
  std::string table;
  int rowSym = 0;

  bool operator==(const RowBinding &o) const = default;
};

struct DagNode {
  DagKind kind;
  // operator payloads (only one is meaningful per kind)
  ArithOp arith = ArithOp::Add;
  CmpOp cmp = CmpOp::Eq;
  BoolOp boolean = BoolOp::And;
  sql::AggKind agg = sql::AggKind::None;

  std::vector<NodeId> children;  // Agg/Filter: [value, condition]

  // InputAttr
  std::string table, column;
  int rowSym = 0;
  ColType attrType = ColType::Float8;

  // Const
  Value constant;

  // FuncApp
  std::string func;

  // Agg / Filter
  std::vector<RowBinding> scope;
  bool distinct = false;  // Filter only
};

// Hash-consed DAG arena. Structurally identical nodes share one id; ids are
// assigned in creation order, so identical build sequences give identical ids.
class DagBuilder {
public:
  NodeId input_attr(const std::string &table, const std::string &column, int rowSym,
                    ColType type);
  NodeId constant(Value v);
  NodeId arith(ArithOp op, std::vector<NodeId> children);
  NodeId cmp(CmpOp op, NodeId lhs, NodeId rhs);
  NodeId boolean(BoolOp op, std::vector<NodeId> children);
  NodeId func_app(const std::string &name, std::vector<NodeId> args, ColType type);
  NodeId aggregate(sql::AggKind kind, NodeId value, NodeId condition,
                   std::vector<RowBinding> scope);
  NodeId filter(NodeId value, NodeId condition, std::vector<RowBinding> scope, bool distinct);

  const DagNode &node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Nodes reachable from the given roots, in id order.
  std::vector<NodeId> reachable(const std::vector<NodeId> &roots) const;

  // InputAttr leaves reachable from `root`, deduplicated, in id order.
  std::vector<NodeId> input_leaves(NodeId root) const;

  // Constant folding and identity elimination; semantics-preserving and
  // idempotent. Returns the simplified equivalent of `root`.
  NodeId simplify(NodeId root);

  // Evaluates the DAG with concrete bindings (table, rowSym) -> row of values.
  // Keyed by "table#rowSym"; row is a pointer into caller-owned data.
  using Binding = std::unordered_map<std::string, const std::vector<Value> *>;
  Value evaluate(NodeId id, const Binding &binding,
                 const std::unordered_map<std::string, const sql::TableSchema *> &schemas) const;

private:
  NodeId intern(DagNode n);

  std::vector<DagNode> nodes_;
  std::unordered_map<std::string, NodeId> consTable_;
  std::unordered_map<NodeId, NodeId> simplified_;
};

// Provenance of one output column in one run: a Filter root in `dag`.
struct ColumnProvenance {
  std::string outputTable;
  int column = 0;
  std::string columnName;
  int run = 0;
  NodeId root = kNoNode;  // Filter node
};

// Symbolically executes `run`, producing one Filter root per column of each
// target output object. All intermediate tables are substituted away; leaves
// are input-table attributes and constants only.
std::vector<ColumnProvenance> symbolic_run(const sql::SqlWorkflow &wf, const model::Run &run,
                                           const std::vector<std::string> &targets,
                                           DagBuilder &dag, int runIndex = 0);

} // namespace pleak::symexec
