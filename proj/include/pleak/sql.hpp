#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pleak/model.hpp"
#include "pleak/value.hpp"

namespace pleak::sql {

struct SourcePos {
  int line = 0;
  int col = 0;
};

struct TableSchema {
  std::string name;
  std::vector<std::pair<std::string, ColType>> columns;
  std::vector<std::string> primaryKey;

  int column_index(const std::string &name) const;
};

struct TableData {
  TableSchema schema;
  std::vector<std::vector<Value>> rows;
};

enum class UnaryOp { Neg, Not };
enum class BinaryOp { Add, Sub, Mul, Div, Pow, Lt, Le, Gt, Ge, Eq, Ne, And, Or };

const char *binary_op_name(BinaryOp op);

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind { Column, Const, Unary, Binary, Call };
  Kind kind;
  SourcePos pos;

  // Column
  std::string qualifier;  // source alias, may be empty
  std::string column;
  int sourceIndex = -1;   // resolved against SelectQuery sources
  int columnIndex = -1;

  // Const
  Value constant;

  // Unary / Binary
  UnaryOp uop = UnaryOp::Neg;
  BinaryOp bop = BinaryOp::Add;

  // Call
  std::string callee;

  std::vector<ExprPtr> args;  // operands / call arguments
  ColType type = ColType::Float8;  // set by resolve()

  ExprPtr clone() const;
};

struct FuncDef {
  std::string name;
  std::vector<std::pair<std::string, ColType>> params;
  ColType returnType;
  ExprPtr body;  // references parameters only
};

enum class AggKind { None, Count, Sum, Min, Max };

const char *agg_kind_name(AggKind k);

struct SelectQuery {
  bool distinct = false;
  AggKind aggregation = AggKind::None;
  ExprPtr aggArg;                                   // SUM/MIN/MAX operand
  std::vector<std::pair<ExprPtr, std::string>> projections;  // (expr, alias)
  std::vector<std::pair<std::string, std::string>> sources;  // (table, alias)
  ExprPtr predicate;
  std::string intoTable;
  SourcePos pos;
};

struct Statement {
  enum class Kind { CreateTable, CreateFunction, Select };
  Kind kind;
  TableSchema table;
  std::shared_ptr<FuncDef> func;
  std::shared_ptr<SelectQuery> select;
};

using Catalog = std::map<std::string, TableSchema>;
using FuncMap = std::map<std::string, std::shared_ptr<FuncDef>>;
using Database = std::map<std::string, TableData>;

// Parses a script of statements. Function bodies are type-checked here;
// SELECT queries are resolved later against a catalog (resolve_select).
std::vector<Statement> parse_sql(const std::string &text);

// Canonical text form; print-parse round-trips up to whitespace.
std::string print_expr(const Expr &e);
std::string print_statement(const Statement &st);

// Resolves column references and types the expression tree in place.
// Returns the output schema of the query.
TableSchema resolve_select(SelectQuery &q, const Catalog &catalog, const FuncMap &funcs);

TableData load_table_data(const TableSchema &schema, const std::string &csvText);
std::string table_to_csv(const TableData &data);

TableData eval_query(const SelectQuery &q, const Database &db, const FuncMap &funcs);

// One SQL-annotated task of a workflow.
struct SqlTask {
  std::string taskId;
  std::string label;
  std::vector<std::shared_ptr<SelectQuery>> queries;  // resolved, in script order
};

struct SqlWorkflow {
  const model::ProcessModel *processModel = nullptr;
  std::vector<SqlTask> tasks;     // topological order
  Catalog schemas;                // base + derived tables
  FuncMap funcs;
  Database data;                  // base-table instances
  std::vector<std::string> inputTables;   // objects never produced by a task
  std::vector<std::string> outputTables;  // produced objects
  std::string parameterTable;             // "parameters" if present

  bool is_input_table(const std::string &name) const;
  const SqlTask *producer_of(const std::string &table) const;
  // Concrete evaluation of every task in order; returns the full database
  // including derived tables.
  Database evaluate_all() const;
};

SqlWorkflow bind_workflow(const model::ProcessModel &m,
                          const std::map<std::string, std::string> &scripts,
                          const Catalog &schemas, const Database &data);

} // namespace pleak::sql
