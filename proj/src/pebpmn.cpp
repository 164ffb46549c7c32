#include "pleak/pebpmn.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

using nlohmann::json;
using namespace pleak::model;

namespace pleak::pebpmn {

namespace {

bool is_encrypt(StereoKind k) {
  return k == StereoKind::PKEncrypt || k == StereoKind::SKEncrypt;
}
bool is_decrypt(StereoKind k) {
  return k == StereoKind::PKDecrypt || k == StereoKind::SKDecrypt;
}

// Tasks that belong to one joint MPC computation, keyed by groupId.
std::map<std::string, std::vector<const FlowNode *>> mpc_groups(const ProcessModel &m) {
  std::map<std::string, std::vector<const FlowNode *>> groups;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (n.stereotype && n.stereotype->kind == StereoKind::Mpc)
        groups[n.stereotype->groupId].push_back(&n);
  return groups;
}

// True if the node has an XOR split strictly upstream in its own pool.
bool behind_xor_split(const ProcessModel &m, const FlowNode &node) {
  const Pool *pool = m.pool_of_node(node.id);
  if (!pool)
    return false;
  std::unordered_map<std::string, std::vector<std::string>> preds;
  std::unordered_map<std::string, const FlowNode *> byId;
  for (const auto &n : pool->nodes)
    byId[n.id] = &n;
  for (const auto &f : pool->flows)
    preds[f.dst].push_back(f.src);
  std::unordered_set<std::string> seen;
  std::vector<std::string> stack{node.id};
  std::unordered_map<std::string, int> outdeg;
  for (const auto &f : pool->flows)
    outdeg[f.src]++;
  while (!stack.empty()) {
    std::string cur = stack.back();
    stack.pop_back();
    for (const auto &pre : preds[cur]) {
      if (!seen.insert(pre).second)
        continue;
      const FlowNode *pn = byId[pre];
      if (pn && pn->kind == NodeKind::XorGateway && outdeg[pre] > 1)
        return true;
      stack.push_back(pre);
    }
  }
  return false;
}

} // namespace

std::vector<ValidationIssue> validate_stereotypes(const ProcessModel &m) {
  std::vector<ValidationIssue> issues;
  auto groups = mpc_groups(m);

  // V1: each MPC task needs a twin with the same label in another pool.
  for (const auto &[gid, members] : groups) {
    for (const FlowNode *t : members) {
      const Pool *myPool = m.pool_of_node(t->id);
      bool twin = false;
      for (const FlowNode *o : members)
        if (o != t && o->label == t->label && m.pool_of_node(o->id) != myPool)
          twin = true;
      if (!twin)
        issues.push_back({"V1",
                          "MPC task \"" + t->label + "\" (group " + gid +
                              ") has no twin task with the same label in another pool",
                          {t->id}});
    }
  }

  // V2: members of one group must be uniformly conditional. A member behind an
  // XOR split while a twin is not means the twin may wait forever.
  for (const auto &[gid, members] : groups) {
    if (members.size() < 2)
      continue;
    std::vector<std::string> conditional, unconditional;
    for (const FlowNode *t : members)
      (behind_xor_split(m, *t) ? conditional : unconditional).push_back(t->id);
    if (!conditional.empty() && !unconditional.empty()) {
      std::vector<std::string> all = conditional;
      all.insert(all.end(), unconditional.begin(), unconditional.end());
      issues.push_back({"V2",
                        "MPC group " + gid +
                            " mixes tasks behind an XOR split with unconditional twins",
                        all});
    }
  }

  // V3: the joint computation has at least one input and one output.
  for (const auto &[gid, members] : groups) {
    bool anyIn = false, anyOut = false;
    std::vector<std::string> ids;
    for (const FlowNode *t : members) {
      anyIn = anyIn || !t->inputs.empty();
      anyOut = anyOut || !t->outputs.empty();
      ids.push_back(t->id);
    }
    if (!anyIn || !anyOut)
      issues.push_back({"V3",
                        "MPC group " + gid + " lacks " +
                            (anyIn ? "an output" : anyOut ? "an input" : "inputs and outputs"),
                        ids});
  }

  // V4: every decrypt key must be produced by a matching encrypt stereotype.
  std::set<std::string> pkKeys, skKeys;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (n.stereotype && is_encrypt(n.stereotype->kind)) {
        (n.stereotype->kind == StereoKind::PKEncrypt ? pkKeys : skKeys)
            .insert(n.stereotype->keyRef);
      }
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (n.stereotype && is_decrypt(n.stereotype->kind)) {
        const auto &keys = n.stereotype->kind == StereoKind::PKDecrypt ? pkKeys : skKeys;
        if (!keys.count(n.stereotype->keyRef))
          issues.push_back({"V4",
                            "decrypt task \"" + n.id + "\" uses key \"" + n.stereotype->keyRef +
                                "\" that no encrypt task produces",
                            {n.id}});
      }

  // V5: reconstruction needs >= threshold shares from one sharing group.
  std::unordered_map<std::string, std::string> shareProducer;  // object -> sharing group
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (n.stereotype && n.stereotype->kind == StereoKind::SSSharing)
        for (const auto &out : n.outputs)
          shareProducer[out] = n.stereotype->groupId;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (n.stereotype && n.stereotype->kind == StereoKind::SSReconstruction) {
        std::map<std::string, int> perGroup;
        for (const auto &in : n.inputs) {
          auto it = shareProducer.find(in);
          if (it != shareProducer.end())
            perGroup[it->second]++;
        }
        int best = 0;
        for (const auto &[g, c] : perGroup)
          best = std::max(best, c);
        int need = n.stereotype->threshold.value_or(1);
        if (best < need)
          issues.push_back({"V5",
                            "reconstruction task \"" + n.id + "\" consumes " +
                                std::to_string(best) + " shares of one group but needs " +
                                std::to_string(need),
                            {n.id}});
      }

  return issues;
}

namespace {

// Protection state of a data object inside one pool.
struct ProtState {
  enum Kind { Plain, Cipher, Share, MpcForeign } kind = Plain;
  std::string key;    // Cipher
  std::string group;  // Share
};

struct PoolView {
  std::unordered_map<std::string, ProtState> state;   // current state per object
  std::unordered_map<std::string, bool> seenPlain;    // object ever plaintext here
  std::unordered_set<std::string> appears;

  void see(const std::string &obj, const ProtState &s) {
    appears.insert(obj);
    state[obj] = s;
    if (s.kind == ProtState::Plain)
      seenPlain[obj] = true;
  }
};

// Global topological order over all nodes: sequence flows plus message flows.
std::vector<const FlowNode *> global_topo(const ProcessModel &m) {
  std::vector<const FlowNode *> nodes;
  std::unordered_map<std::string, int> idx;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes) {
      idx[n.id] = static_cast<int>(nodes.size());
      nodes.push_back(&n);
    }
  std::vector<std::vector<int>> out(nodes.size());
  std::vector<int> deg(nodes.size(), 0);
  auto addEdge = [&](const std::string &s, const std::string &d) {
    auto si = idx.find(s), di = idx.find(d);
    if (si == idx.end() || di == idx.end())
      return;
    out[si->second].push_back(di->second);
    deg[di->second]++;
  };
  for (const auto &p : m.pools)
    for (const auto &f : p.flows)
      addEdge(f.src, f.dst);
  for (const auto &f : m.messageFlows)
    addEdge(f.source, f.target);
  std::vector<int> queue;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (deg[i] == 0)
      queue.push_back(static_cast<int>(i));
  std::vector<const FlowNode *> order;
  size_t head = 0;
  while (head < queue.size()) {
    int v = queue[head++];
    order.push_back(nodes[v]);
    for (int w : out[v])
      if (--deg[w] == 0)
        queue.push_back(w);
  }
  if (order.size() != nodes.size())
    fail(ErrorKind::ModelShape, "model contains a cycle across sequence/message flows");
  return order;
}

} // namespace

DisclosureReport disclosure_report(const ProcessModel &m) {
  // Forward propagation of protection states over one canonical order.
  std::unordered_map<std::string, PoolView> views;  // pool id -> view
  std::unordered_map<std::string, bool> wirePlain;  // object -> seen plaintext on a wire
  std::unordered_set<std::string> wireSeen;

  std::unordered_map<std::string, std::unordered_set<std::string>> producedIn, receivedIn;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      for (const auto &o : n.outputs)
        producedIn[p.id].insert(o);
  for (const auto &f : m.messageFlows) {
    const Pool *tp = m.pool_of_node(f.target);
    if (tp)
      for (const auto &o : f.data)
        receivedIn[tp->id].insert(o);
  }

  // A pool's own source objects start out plaintext.
  for (const auto &p : m.pools) {
    auto isSource = [&](const std::string &obj) {
      return !producedIn[p.id].count(obj) && !receivedIn[p.id].count(obj);
    };
    for (const auto &d : m.dataObjects)
      if (d.pool == p.id && isSource(d.name))
        views[p.id].see(d.name, {});
    for (const auto &n : p.nodes)
      for (const auto &in : n.inputs)
        if (isSource(in) && !views[p.id].state.count(in))
          views[p.id].see(in, {});
  }

  // Message flows indexed by target node.
  std::unordered_map<std::string, std::vector<const MessageFlow *>> byTarget;
  for (const auto &f : m.messageFlows)
    byTarget[f.target].push_back(&f);

  for (const FlowNode *n : global_topo(m)) {
    const Pool *pool = m.pool_of_node(n->id);
    if (!pool)
      continue;
    PoolView &view = views[pool->id];
    bool targetIsMpc = n->stereotype && n->stereotype->kind == StereoKind::Mpc;

    // Deliver incoming message payloads first.
    for (const MessageFlow *f : byTarget[n->id]) {
      const Pool *srcPool = m.pool_of_node(f->source);
      for (const auto &obj : f->data) {
        ProtState srcState;
        if (srcPool) {
          auto it = views[srcPool->id].state.find(obj);
          if (it != views[srcPool->id].state.end())
            srcState = it->second;
        }
        // MPC protocol traffic is protected regardless of the payload state.
        ProtState wire = srcState;
        if (targetIsMpc)
          wire = {ProtState::MpcForeign, "", ""};
        wireSeen.insert(obj);
        if (wire.kind == ProtState::Plain)
          wirePlain[obj] = true;
        view.see(obj, wire);
      }
    }

    if (n->kind != NodeKind::Task)
      continue;
    for (const auto &in : n->inputs)
      view.appears.insert(in);

    // Output protection by stereotype.
    ProtState outState;  // Plain by default
    if (n->stereotype) {
      const Stereotype &s = *n->stereotype;
      if (is_encrypt(s.kind)) {
        outState = {ProtState::Cipher, s.keyRef, ""};
      } else if (is_decrypt(s.kind)) {
        outState = {};
      } else if (s.kind == StereoKind::SSSharing) {
        outState = {ProtState::Share, "", s.groupId};
      } else if (s.kind == StereoKind::SSReconstruction) {
        std::map<std::string, int> perGroup;
        bool anyPlainInput = false;
        for (const auto &in : n->inputs) {
          auto it = view.state.find(in);
          if (it == view.state.end() || it->second.kind == ProtState::Plain)
            anyPlainInput = true;
          else if (it->second.kind == ProtState::Share)
            perGroup[it->second.group]++;
        }
        int best = 0;
        std::string bestGroup;
        for (const auto &[g, c] : perGroup)
          if (c > best) { best = c; bestGroup = g; }
        if (anyPlainInput || best >= n->stereotype->threshold.value_or(1))
          outState = {};
        else
          outState = {ProtState::Share, "", bestGroup};
      } else {
        outState = {};  // MPC outputs are plaintext in the pool where placed
      }
    }
    for (const auto &out : n->outputs)
      view.see(out, outState);
  }

  DisclosureReport rep;
  rep.columns = m.object_names();
  for (const auto &p : m.pools)
    rep.rows.push_back(p.name);
  rep.rows.push_back("shared over");

  for (const auto &p : m.pools) {
    std::vector<Cell> row;
    const PoolView &view = views[p.id];
    for (const auto &obj : rep.columns) {
      if (!view.appears.count(obj))
        row.push_back(Cell::Absent);
      else if (view.seenPlain.count(obj) && view.seenPlain.at(obj))
        row.push_back(Cell::Visible);
      else
        row.push_back(Cell::Hidden);
    }
    rep.cells.push_back(std::move(row));
  }
  std::vector<Cell> shared;
  for (const auto &obj : rep.columns) {
    if (!wireSeen.count(obj))
      shared.push_back(Cell::Absent);
    else if (wirePlain.count(obj) && wirePlain.at(obj))
      shared.push_back(Cell::Visible);
    else
      shared.push_back(Cell::Hidden);
  }
  rep.cells.push_back(std::move(shared));
  return rep;
}

DependencyMatrix dependency_matrix(const ProcessModel &m) {
  DependencyMatrix mat;
  mat.objects = m.object_names();
  size_t n = mat.objects.size();
  std::unordered_map<std::string, size_t> idx;
  for (size_t i = 0; i < n; ++i)
    idx[mat.objects[i]] = i;

  // Dependency units: plain tasks individually; the tasks of one MPC group
  // jointly, since the joint computation maps the union of member inputs to
  // the union of member outputs.
  struct Unit {
    std::set<std::string> in, out;
  };
  std::vector<Unit> units;
  std::map<std::string, size_t> groupUnit;
  for (const auto &p : m.pools)
    for (const auto &node : p.nodes) {
      if (node.kind != NodeKind::Task)
        continue;
      Unit *u;
      if (node.stereotype && node.stereotype->kind == StereoKind::Mpc) {
        auto [it, inserted] = groupUnit.try_emplace(node.stereotype->groupId, units.size());
        if (inserted)
          units.emplace_back();
        u = &units[it->second];
      } else {
        units.emplace_back();
        u = &units.back();
      }
      u->in.insert(node.inputs.begin(), node.inputs.end());
      u->out.insert(node.outputs.begin(), node.outputs.end());
    }

  std::vector<std::vector<bool>> direct(n, std::vector<bool>(n, false));
  for (const auto &u : units)
    for (const auto &a : u.in)
      for (const auto &b : u.out)
        direct[idx[a]][idx[b]] = true;

  auto closure = direct;
  for (size_t k = 0; k < n; ++k)
    for (size_t i = 0; i < n; ++i) {
      if (!closure[i][k])
        continue;
      for (size_t j = 0; j < n; ++j)
        if (closure[k][j])
          closure[i][j] = true;
    }

  mat.cells.assign(n, std::vector<Dep>(n, Dep::None));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (i == j)
        continue;
      if (direct[i][j])
        mat.cells[i][j] = Dep::Direct;
      else if (closure[i][j])
        mat.cells[i][j] = Dep::Indirect;
    }
  return mat;
}

Cell DisclosureReport::at(const std::string &row, const std::string &col) const {
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i] == row)
      for (size_t j = 0; j < columns.size(); ++j)
        if (columns[j] == col)
          return cells[i][j];
  fail(ErrorKind::Evaluation, "no disclosure cell (" + row + ", " + col + ")");
}

Dep DependencyMatrix::at(const std::string &from, const std::string &to) const {
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i] == from)
      for (size_t j = 0; j < objects.size(); ++j)
        if (objects[j] == to)
          return cells[i][j];
  fail(ErrorKind::Evaluation, "no dependency cell (" + from + ", " + to + ")");
}

namespace {

std::string csv_quote(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  out += '"';
  return out;
}

} // namespace

std::string DisclosureReport::to_csv() const {
  std::ostringstream os;
  os << "stakeholder";
  for (const auto &c : columns)
    os << "," << csv_quote(c);
  os << "\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    os << csv_quote(rows[i]);
    for (size_t j = 0; j < columns.size(); ++j)
      os << "," << cell_char(cells[i][j]);
    os << "\n";
  }
  return os.str();
}

std::string DisclosureReport::to_json() const {
  json doc;
  doc["schemaVersion"] = 1;
  doc["columns"] = columns;
  doc["rows"] = json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    json r;
    r["name"] = rows[i];
    std::string line;
    json cl = json::array();
    for (Cell c : cells[i])
      cl.push_back(std::string(1, cell_char(c)));
    r["cells"] = cl;
    doc["rows"].push_back(r);
  }
  return doc.dump(2) + "\n";
}

std::string DisclosureReport::to_text() const {
  std::ostringstream os;
  size_t w = 11;  // "shared over"
  for (const auto &r : rows)
    w = std::max(w, r.size());
  os << std::string(w, ' ');
  for (const auto &c : columns)
    os << "  " << c;
  os << "\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    os << rows[i] << std::string(w - rows[i].size(), ' ');
    for (size_t j = 0; j < columns.size(); ++j)
      os << "  " << std::string(columns[j].size() / 2, ' ') << cell_char(cells[i][j])
         << std::string(columns[j].size() - columns[j].size() / 2 - 1, ' ');
    os << "\n";
  }
  return os.str();
}

std::string DependencyMatrix::to_csv() const {
  std::ostringstream os;
  os << "object";
  for (const auto &c : objects)
    os << "," << csv_quote(c);
  os << "\n";
  for (size_t i = 0; i < objects.size(); ++i) {
    os << csv_quote(objects[i]);
    for (size_t j = 0; j < objects.size(); ++j)
      os << "," << dep_char(cells[i][j]);
    os << "\n";
  }
  return os.str();
}

std::string DependencyMatrix::to_json() const {
  json doc;
  doc["schemaVersion"] = 1;
  doc["objects"] = objects;
  doc["rows"] = json::array();
  for (size_t i = 0; i < objects.size(); ++i) {
    json r;
    r["name"] = objects[i];
    json cl = json::array();
    for (Dep d : cells[i])
      cl.push_back(std::string(1, dep_char(d)));
    r["cells"] = cl;
    doc["rows"].push_back(r);
  }
  return doc.dump(2) + "\n";
}

std::string DependencyMatrix::to_text() const {
  std::ostringstream os;
  size_t w = 0;
  for (const auto &r : objects)
    w = std::max(w, r.size());
  os << std::string(w, ' ');
  for (const auto &c : objects)
    os << "  " << c;
  os << "\n";
  for (size_t i = 0; i < objects.size(); ++i) {
    os << objects[i] << std::string(w - objects[i].size(), ' ');
    for (size_t j = 0; j < objects.size(); ++j)
      os << "  " << std::string(objects[j].size() / 2, ' ') << dep_char(cells[i][j])
         << std::string(objects[j].size() - objects[j].size() / 2 - 1, ' ');
    os << "\n";
  }
  return os.str();
}

} // namespace pleak::pebpmn
