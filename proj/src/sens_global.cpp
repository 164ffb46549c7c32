#include "pleak/sens_global.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace pleak::sensglobal {

namespace {

// Per-task structural rule: adding one row to `table` changes the row count
// of the query output by at most the returned bound.
Bound task_bound(const sql::SelectQuery &q, const std::string &table) {
  int reads = 0;
  for (const auto &[src, alias] : q.sources)
    if (src == table)
      ++reads;
  if (reads == 0)
    return Bound::finite(0);  // unrelated table cannot move the count
  if (reads > 1)
    return Bound::inf();  // self-join: one row may pair with itself and others

  if (q.sources.size() == 1)
    return Bound::finite(1);  // single table, no join fanout

  if (q.distinct) {
    // One added row contributes at most one distinct output row when every
    // projected expression only reads the added table.
    bool allFromTable = !q.projections.empty();
    for (const auto &[expr, alias] : q.projections) {
      std::vector<const sql::Expr *> stack{expr.get()};
      while (!stack.empty()) {
        const sql::Expr *e = stack.back();
        stack.pop_back();
        if (e->kind == sql::Expr::Kind::Column) {
          const auto &src = q.sources[e->sourceIndex].first;
          if (src != table)
            allFromTable = false;
        }
        for (const auto &a : e->args)
          stack.push_back(a.get());
      }
    }
    if (allFromTable)
      return Bound::finite(1);
  }
  return Bound::inf();
}

Bound mul(Bound a, Bound b) {
  if (a.kind == Bound::NotApplicable || b.kind == Bound::NotApplicable)
    return Bound::na();
  if (a.kind == Bound::Finite && a.value == 0)
    return Bound::finite(0);
  if (b.kind == Bound::Finite && b.value == 0)
    return Bound::finite(0);
  if (a.kind == Bound::Infinite || b.kind == Bound::Infinite)
    return Bound::inf();
  return Bound::finite(a.value * b.value);
}

Bound add(Bound a, Bound b) {
  if (a.kind == Bound::NotApplicable)
    return b;
  if (b.kind == Bound::NotApplicable)
    return a;
  if (a.kind == Bound::Infinite || b.kind == Bound::Infinite)
    return Bound::inf();
  return Bound::finite(a.value + b.value);
}

} // namespace

GlobalSensitivityMatrix global_sensitivity(const sql::SqlWorkflow &wf,
                                           const std::optional<std::string> &targetTask) {
  GlobalSensitivityMatrix m;
  m.tables = wf.inputTables;
  std::sort(m.tables.begin(), m.tables.end());

  struct TaskEntry {
    const sql::SqlTask *task;
    const sql::SelectQuery *query;
    bool supported;
  };
  std::vector<TaskEntry> entries;
  for (const auto &t : wf.tasks) {
    if (targetTask && t.taskId != *targetTask)
      continue;
    for (const auto &q : t.queries) {
      // COUNT-style means the analyzer counts output rows: a plain SELECT or
      // an explicit COUNT(*). Other aggregations have no COUNT semantics.
      bool supported =
          q->aggregation == sql::AggKind::None || q->aggregation == sql::AggKind::Count;
      if (!supported && targetTask)
        fail(ErrorKind::UnsupportedAggregation,
             "global sensitivity supports only COUNT queries; task \"" + t.taskId +
                 "\" aggregates with " + sql::agg_kind_name(q->aggregation));
      entries.push_back({&t, q.get(), supported});
    }
  }
  if (targetTask && entries.empty())
    fail(ErrorKind::Binding, "no such task \"" + *targetTask + "\"");

  // Per-query bounds, including derived tables (needed for composition).
  // sens[qi][table] for both base and derived source tables.
  std::vector<std::map<std::string, Bound>> direct(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    std::set<std::string> srcs;
    for (const auto &[src, alias] : entries[i].query->sources)
      srcs.insert(src);
    for (const auto &s : srcs)
      direct[i][s] =
          entries[i].supported ? task_bound(*entries[i].query, s) : Bound::na();
  }

  // Row-change sensitivity of each derived table w.r.t. each input table,
  // composed along the production chain: sens(out, t) = sum over sources s of
  // direct(out, s) * sens(s, t).
  std::map<std::string, std::map<std::string, Bound>> tableSens;
  for (const auto &t : m.tables) {
    tableSens[t][t] = Bound::finite(1);
  }
  // wf.tasks is topologically ordered; entries follows it.
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto *q = entries[i].query;
    std::map<std::string, Bound> acc;
    for (const auto &t : m.tables) {
      Bound total = Bound::finite(0);
      for (const auto &[src, b] : direct[i]) {
        Bound up = src == t ? Bound::finite(1)
                            : (tableSens.count(src) && tableSens[src].count(t)
                                   ? tableSens[src][t]
                                   : Bound::finite(0));
        if (!entries[i].supported) {
          if (up.kind != Bound::Finite || up.value != 0)
            total = Bound::na();
          continue;
        }
        Bound term = mul(b, up);
        if (total.kind == Bound::NotApplicable)
          continue;
        total = add(total, term);
      }
      acc[t] = total;
    }
    tableSens[q->intoTable] = acc;
  }

  for (const auto &e : entries)
    m.taskColumns.push_back(e.task->label.empty() ? e.task->taskId : e.task->label);
  m.taskColumns.push_back("workflow");

  // Workflow column: the final outputs are the tables nothing else consumes.
  std::set<std::string> consumed;
  for (const auto &e : entries)
    for (const auto &[src, alias] : e.query->sources)
      consumed.insert(src);
  std::vector<std::string> finals;
  for (const auto &e : entries)
    if (!consumed.count(e.query->intoTable))
      finals.push_back(e.query->intoTable);

  for (const auto &t : m.tables) {
    std::vector<Bound> row;
    for (const auto &e : entries) {
      // Per-task cell: direct structural bound w.r.t. the input table if read
      // directly; composition is reserved for the workflow column.
      auto it = tableSens.find(e.query->intoTable);
      Bound b = Bound::finite(0);
      bool readsDirectly = false;
      for (const auto &[src, alias] : e.query->sources)
        if (src == t)
          readsDirectly = true;
      if (!e.supported)
        b = Bound::na();
      else if (readsDirectly)
        b = task_bound(*e.query, t);
      else if (it != tableSens.end() && it->second.count(t))
        b = it->second.at(t);
      row.push_back(b);
    }
    // whole-workflow cell: max over final outputs (parallel alternatives).
    Bound whole = Bound::finite(0);
    for (const auto &f : finals) {
      Bound b = tableSens.count(f) && tableSens[f].count(t) ? tableSens[f][t] : Bound::finite(0);
      if (b.kind == Bound::NotApplicable) {
        whole = Bound::na();
        break;
      }
      if (b.kind == Bound::Infinite)
        whole = Bound::inf();
      else if (whole.kind == Bound::Finite)
        whole = Bound::finite(std::max(whole.value, b.value));
    }
    row.push_back(whole);
    m.cells.push_back(std::move(row));
  }
  return m;
}

Bound GlobalSensitivityMatrix::at(const std::string &table, const std::string &taskColumn) const {
  for (size_t i = 0; i < tables.size(); ++i)
    if (tables[i] == table)
      for (size_t j = 0; j < taskColumns.size(); ++j)
        if (taskColumns[j] == taskColumn)
          return cells[i][j];
  fail(ErrorKind::Evaluation, "no sensitivity cell (" + table + ", " + taskColumn + ")");
}

std::string GlobalSensitivityMatrix::to_csv() const {
  std::ostringstream os;
  os << "table";
  for (const auto &c : taskColumns)
    os << "," << c;
  os << "\n";
  for (size_t i = 0; i < tables.size(); ++i) {
    os << tables[i];
    for (size_t j = 0; j < taskColumns.size(); ++j)
      os << "," << cells[i][j].str();
    os << "\n";
  }
  return os.str();
}

std::string GlobalSensitivityMatrix::to_text() const {
  std::ostringstream os;
  size_t w = 5;
  for (const auto &t : tables)
    w = std::max(w, t.size());
  os << std::string(w, ' ');
  for (const auto &c : taskColumns)
    os << "  " << c;
  os << "\n";
  for (size_t i = 0; i < tables.size(); ++i) {
    os << tables[i] << std::string(w - tables[i].size(), ' ');
    for (size_t j = 0; j < taskColumns.size(); ++j) {
      std::string s = cells[i][j].str();
      os << "  " << s << std::string(taskColumns[j].size() > s.size()
                                         ? taskColumns[j].size() - s.size()
                                         : 0,
                                     ' ');
    }
    os << "\n";
  }
  return os.str();
}

std::string GlobalSensitivityMatrix::to_json() const {
  json doc;
  doc["schemaVersion"] = 1;
  doc["tasks"] = taskColumns;
  doc["rows"] = json::array();
  for (size_t i = 0; i < tables.size(); ++i) {
    json r;
    r["table"] = tables[i];
    json cl = json::array();
    for (const auto &b : cells[i])
      cl.push_back(b.str());
    r["cells"] = cl;
    doc["rows"].push_back(r);
  }
  return doc.dump(2) + "\n";
}

} // namespace pleak::sensglobal
