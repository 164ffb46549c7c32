#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pleak/sql.hpp"

namespace pleak::sensderiv {

// Row/column sensitivity declaration for one table. Distances between two
// instances are: per sensitive row, a norm over per-column absolute changes
// (the binding tree); across rows, the return combiner.
struct NormSpec {
  bool allRows = true;
  std::vector<int> rowIndices;  // 0-based, used when !allRows
  std::vector<std::string> cols;  // empty means "cols: none"
  std::optional<double> G;        // cost of adding/removing one row

  struct Binding {
    enum Kind { Lp, Scale, Linf } kind = Lp;
    std::string name;
    double p = 2.0;      // Lp
    double scale = 1.0;  // Scale
    std::vector<std::string> args;  // column names or earlier binding names
  };
  std::vector<Binding> bindings;

  struct Combiner {
    enum Kind { Linf, Lp } kind = Linf;
    double p = 1.0;
  } returnCombiner;
  std::string returnBinding;

  bool has_sensitive_cols() const { return !cols.empty(); }
  std::string print() const;

  // Row indices that are sensitive for an instance with `rowCount` rows.
  std::vector<int> sensitive_rows(int rowCount) const;
};

NormSpec parse_norm(const std::string &text);

// The binding tree compiled against a table schema: every leaf is a sensitive
// column position, checked numeric, each used exactly once.
struct NormTree {
  struct Node {
    enum Kind { Column, Lp, Scale, Linf } kind = Column;
    int colPos = -1;     // position in NormSpec::cols
    double p = 2.0;
    double scale = 1.0;
    std::vector<Node> children;
  };
  Node root;
  NormSpec::Combiner combiner;
  std::vector<std::string> cols;       // sensitive column names
  std::vector<int> colSchemaIndex;     // position in the table schema

  // Distance of one row change: norm of per-column absolute deltas
  // (indexed like `cols`).
  double row_distance(const std::vector<double> &absDeltas) const;

  // Dual norm of a gradient block (indexed like `cols`).
  double row_dual(const std::vector<double> &grad) const;

  // Combine per-row distances into a table distance.
  double table_distance(const std::vector<double> &rowDistances) const;

  // Combine per-row dual norms into the table sensitivity.
  double table_dual(const std::vector<double> &rowDuals) const;
};

NormTree compile_norm(const NormSpec &spec, const sql::TableSchema &schema);

} // namespace pleak::sensderiv
