#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "pleak/sql.hpp"

using namespace pleak::model;

namespace pleak::sql {

bool SqlWorkflow::is_input_table(const std::string &name) const {
  return std::find(inputTables.begin(), inputTables.end(), name) != inputTables.end();
}

const SqlTask *SqlWorkflow::producer_of(const std::string &table) const {
  for (const auto &t : tasks)
    for (const auto &q : t.queries)
      if (q->intoTable == table)
        return &t;
  return nullptr;
}

Database SqlWorkflow::evaluate_all() const {
  Database db = data;
  for (const auto &t : tasks)
    for (const auto &q : t.queries)
      db[q->intoTable] = eval_query(*q, db, funcs);
  return db;
}

SqlWorkflow bind_workflow(const ProcessModel &m,
                          const std::map<std::string, std::string> &scripts,
                          const Catalog &schemas, const Database &data) {
  SqlWorkflow wf;
  wf.processModel = &m;
  wf.schemas = schemas;
  wf.data = data;

  struct Pending {
    const FlowNode *node;
    std::vector<std::shared_ptr<SelectQuery>> queries;
  };
  std::vector<Pending> pending;

  for (const auto &pool : m.pools) {
    for (const auto &node : pool.nodes) {
      if (node.kind != NodeKind::Task)
        continue;
      bool hasIo = !node.inputs.empty() || !node.outputs.empty();
      auto it = scripts.find(node.id);
      if (it == scripts.end()) {
        if (hasIo)
          fail(ErrorKind::Binding, "task \"" + node.id + "\" has data objects but no script");
        continue;
      }
      Pending p;
      p.node = &node;
      for (auto &st : parse_sql(it->second)) {
        switch (st.kind) {
        case Statement::Kind::CreateFunction:
          wf.funcs[st.func->name] = st.func;
          break;
        case Statement::Kind::CreateTable:
          wf.schemas[st.table.name] = st.table;
          break;
        case Statement::Kind::Select: {
          std::set<std::string> inputSet(node.inputs.begin(), node.inputs.end());
          std::set<std::string> outputSet(node.outputs.begin(), node.outputs.end());
          for (const auto &[table, alias] : st.select->sources)
            if (!inputSet.count(table))
              fail(ErrorKind::Binding,
                   "task \"" + node.id + "\" reads table \"" + table +
                       "\" that is not among its input objects");
          if (!outputSet.count(st.select->intoTable))
            fail(ErrorKind::Binding,
                 "task \"" + node.id + "\" writes table \"" + st.select->intoTable +
                     "\" that is not among its output objects");
          p.queries.push_back(st.select);
          break;
        }
        }
      }
      pending.push_back(std::move(p));
    }
  }

  // Topological order over table dependencies, resolving schemas as tables
  // become defined.
  std::unordered_set<std::string> defined;
  for (const auto &[name, schema] : wf.schemas)
    defined.insert(name);

  std::set<std::string> produced;
  for (const auto &p : pending)
    for (const auto &q : p.queries)
      produced.insert(q->intoTable);

  std::vector<bool> done(pending.size(), false);
  size_t remaining = pending.size();
  while (remaining > 0) {
    bool progress = false;
    for (size_t i = 0; i < pending.size(); ++i) {
      if (done[i])
        continue;
      bool ready = true;
      for (const auto &q : pending[i].queries)
        for (const auto &[table, alias] : q->sources)
          if (!defined.count(table))
            ready = false;
      if (!ready)
        continue;
      SqlTask task;
      task.taskId = pending[i].node->id;
      task.label = pending[i].node->label;
      for (auto &q : pending[i].queries) {
        TableSchema out = resolve_select(*q, wf.schemas, wf.funcs);
        if (wf.schemas.count(out.name) && !produced.count(out.name))
          fail(ErrorKind::Binding, "query output \"" + out.name + "\" collides with a base table");
        wf.schemas[out.name] = out;
        defined.insert(out.name);
        task.queries.push_back(q);
      }
      wf.tasks.push_back(std::move(task));
      done[i] = true;
      --remaining;
      progress = true;
    }
    if (!progress) {
      std::string missing;
      for (size_t i = 0; i < pending.size(); ++i)
        if (!done[i])
          missing += (missing.empty() ? "" : ", ") + pending[i].node->id;
      fail(ErrorKind::Binding,
           "cannot order tasks (unbound or cyclic table references): " + missing);
    }
  }

  for (const auto &[name, schema] : wf.schemas) {
    if (produced.count(name))
      wf.outputTables.push_back(name);
    else
      wf.inputTables.push_back(name);
  }
  if (wf.schemas.count("parameters"))
    wf.parameterTable = "parameters";
  return wf;
}

} // namespace pleak::sql
