#pragma once

#include <string>
#include <vector>

#include "pleak/symexec.hpp"

namespace pleak::leakswhen {

// Input attribute appearing in a report branch.
struct AttrRef {
  std::string table;
  std::string column;

  bool operator==(const AttrRef &o) const = default;
  bool operator<(const AttrRef &o) const {
    return table != o.table ? table < o.table : column < o.column;
  }
};

struct ColumnEntry {
  std::string outputObject;
  int column = 0;
  std::string columnName;
  int run = 0;
  symexec::NodeId leak = symexec::kNoNode;  // value branch
  symexec::NodeId when = symexec::kNoNode;  // condition branch
  symexec::NodeId root = symexec::kNoNode;  // Filter node
  bool distinct = false;
  std::vector<AttrRef> leakInputs;  // exact leaf set of the leak branch
  std::vector<AttrRef> whenInputs;
};

struct LeaksWhenReport {
  symexec::DagBuilder dag;
  std::vector<std::string> targets;     // tab order
  std::vector<ColumnEntry> entries;     // grouped by target, column, run
};

enum class Format { Dot, Json, Text };

Format parse_format(const std::string &name);

LeaksWhenReport leaks_when(const sql::SqlWorkflow &wf, const std::vector<std::string> &targets,
                           int runCap = model::kDefaultRunCap);

// Renders the whole report in one string. DOT output contains one digraph per
// column entry; JSON mirrors the DAG with stable node ids; text is a nested
// s-expression form.
std::string render(const LeaksWhenReport &report, Format format);

// Renders a single entry (used for per-file CLI artifacts).
std::string render_entry_dot(const LeaksWhenReport &report, const ColumnEntry &entry);

} // namespace pleak::leakswhen
