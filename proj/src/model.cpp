#include "pleak/model.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace pleak::model {

const char *node_kind_name(NodeKind k) {
  switch (k) {
  case NodeKind::Task: return "task";
  case NodeKind::StartEvent: return "startEvent";
  case NodeKind::EndEvent: return "endEvent";
  case NodeKind::XorGateway: return "xorGateway";
  case NodeKind::AndGateway: return "andGateway";
  }
  return "?";
}

const char *stereo_kind_name(StereoKind k) {
  switch (k) {
  case StereoKind::Mpc: return "MPC";
  case StereoKind::SSSharing: return "SSSharing";
  case StereoKind::SSReconstruction: return "SSReconstruction";
  case StereoKind::PKEncrypt: return "PKEncrypt";
  case StereoKind::PKDecrypt: return "PKDecrypt";
  case StereoKind::SKEncrypt: return "SKEncrypt";
  case StereoKind::SKDecrypt: return "SKDecrypt";
  }
  return "?";
}

namespace {

NodeKind parse_node_kind(const std::string &s) {
  if (s == "task") return NodeKind::Task;
  if (s == "startEvent") return NodeKind::StartEvent;
  if (s == "endEvent") return NodeKind::EndEvent;
  if (s == "xorGateway") return NodeKind::XorGateway;
  if (s == "andGateway") return NodeKind::AndGateway;
  fail(ErrorKind::ModelShape, "unknown node kind \"" + s + "\"");
}

StereoKind parse_stereo_kind(const std::string &s) {
  if (s == "MPC") return StereoKind::Mpc;
  if (s == "SSSharing") return StereoKind::SSSharing;
  if (s == "SSReconstruction") return StereoKind::SSReconstruction;
  if (s == "PKEncrypt") return StereoKind::PKEncrypt;
  if (s == "PKDecrypt") return StereoKind::PKDecrypt;
  if (s == "SKEncrypt") return StereoKind::SKEncrypt;
  if (s == "SKDecrypt") return StereoKind::SKDecrypt;
  fail(ErrorKind::ModelShape, "unknown stereotype kind \"" + s + "\"");
}

std::vector<std::string> string_list(const json &j, const char *what) {
  std::vector<std::string> out;
  if (!j.is_array())
    fail(ErrorKind::ModelShape, std::string(what) + " must be an array");
  for (const auto &e : j) {
    if (!e.is_string())
      fail(ErrorKind::ModelShape, std::string(what) + " entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void build_model(ProcessModel &m, const json &doc);

} // namespace

const FlowNode *ProcessModel::find_node(const std::string &id) const {
  for (const auto &p : pools)
    for (const auto &n : p.nodes)
      if (n.id == id)
        return &n;
  return nullptr;
}

const Pool *ProcessModel::pool_of_node(const std::string &nodeId) const {
  for (const auto &p : pools)
    for (const auto &n : p.nodes)
      if (n.id == nodeId)
        return &p;
  return nullptr;
}

const Pool *ProcessModel::find_pool(const std::string &id) const {
  for (const auto &p : pools)
    if (p.id == id)
      return &p;
  return nullptr;
}

const DataObject *ProcessModel::find_data_object(const std::string &name) const {
  for (const auto &d : dataObjects)
    if (d.name == name)
      return &d;
  return nullptr;
}

std::vector<std::string> ProcessModel::object_names() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  auto add = [&](const std::string &n) {
    if (seen.insert(n).second)
      out.push_back(n);
  };
  for (const auto &d : dataObjects)
    add(d.name);
  for (const auto &p : pools)
    for (const auto &n : p.nodes) {
      for (const auto &x : n.inputs) add(x);
      for (const auto &x : n.outputs) add(x);
    }
  for (const auto &m : messageFlows)
    for (const auto &x : m.data)
      add(x);
  return out;
}

ProcessModel load_model(const std::string &jsonText) {
  json doc;
  try {
    doc = json::parse(jsonText);
  } catch (const json::parse_error &e) {
    // nlohmann reports a byte offset; recover the line/column for the message.
    int line = 1, col = 1;
    for (size_t i = 0; i < e.byte && i < jsonText.size(); ++i) {
      if (jsonText[i] == '\n') { ++line; col = 1; } else ++col;
    }
    throw Error(ErrorKind::JsonParse, std::string("JSON parse error: ") + e.what(), line, col);
  }

  ProcessModel m;
  if (!doc.is_object())
    fail(ErrorKind::ModelShape, "top-level JSON must be an object");

  try {
    build_model(m, doc);
  } catch (const json::exception &e) {
    fail(ErrorKind::ModelShape, std::string("malformed model field: ") + e.what());
  }
  return m;
}

namespace {

void build_model(ProcessModel &m, const json &doc) {
  for (const auto &jp : doc.value("pools", json::array())) {
    Pool p;
    p.id = jp.value("id", "");
    p.name = jp.value("name", "");
    if (p.id.empty())
      fail(ErrorKind::ModelShape, "pool without id");
    for (const auto &jn : jp.value("nodes", json::array())) {
      FlowNode n;
      n.id = jn.value("id", "");
      if (n.id.empty())
        fail(ErrorKind::ModelShape, "node without id in pool \"" + p.id + "\"");
      n.kind = parse_node_kind(jn.value("kind", "task"));
      n.label = jn.value("label", "");
      if (jn.contains("inputs")) n.inputs = string_list(jn["inputs"], "inputs");
      if (jn.contains("outputs")) n.outputs = string_list(jn["outputs"], "outputs");
      n.scriptFile = jn.value("scriptFile", "");
      if (jn.contains("stereotype")) {
        const auto &js = jn["stereotype"];
        Stereotype s;
        s.kind = parse_stereo_kind(js.value("kind", ""));
        s.groupId = js.value("groupId", "");
        s.keyRef = js.value("keyRef", "");
        if (js.contains("threshold"))
          s.threshold = js["threshold"].get<int>();
        if (s.kind == StereoKind::Mpc && s.groupId.empty())
          fail(ErrorKind::ModelShape, "MPC stereotype on \"" + n.id + "\" requires groupId");
        if ((s.kind == StereoKind::PKEncrypt || s.kind == StereoKind::PKDecrypt ||
             s.kind == StereoKind::SKEncrypt || s.kind == StereoKind::SKDecrypt) &&
            s.keyRef.empty())
          fail(ErrorKind::ModelShape, "encryption stereotype on \"" + n.id + "\" requires keyRef");
        if (s.kind == StereoKind::SSReconstruction && (!s.threshold || *s.threshold < 1))
          fail(ErrorKind::ModelShape, "SSReconstruction on \"" + n.id + "\" requires threshold >= 1");
        n.stereotype = s;
      }
      p.nodes.push_back(std::move(n));
    }
    for (const auto &jf : jp.value("flows", json::array())) {
      if (!jf.is_array() || jf.size() != 2)
        fail(ErrorKind::ModelShape, "flow entries must be [src, dst] pairs");
      p.flows.push_back({jf[0].get<std::string>(), jf[1].get<std::string>()});
    }
    m.pools.push_back(std::move(p));
  }

  for (const auto &jm : doc.value("messageFlows", json::array())) {
    MessageFlow f;
    f.source = jm.value("source", "");
    f.target = jm.value("target", "");
    if (jm.contains("data")) f.data = string_list(jm["data"], "message data");
    m.messageFlows.push_back(std::move(f));
  }

  for (const auto &jd : doc.value("dataObjects", json::array())) {
    DataObject d;
    d.name = jd.value("name", "");
    d.pool = jd.value("pool", "");
    d.schemaFile = jd.value("schemaFile", "");
    d.dataFile = jd.value("dataFile", "");
    d.normFile = jd.value("normFile", "");
    if (d.name.empty())
      fail(ErrorKind::ModelShape, "data object without name");
    m.dataObjects.push_back(std::move(d));
  }

  // Link checks: unique node ids, resolvable flow endpoints, data-object pools.
  std::unordered_set<std::string> ids;
  for (const auto &p : m.pools)
    for (const auto &n : p.nodes)
      if (!ids.insert(n.id).second)
        fail(ErrorKind::ModelShape, "duplicate node id \"" + n.id + "\"");

  for (const auto &p : m.pools)
    for (const auto &f : p.flows) {
      for (const auto &end : {f.src, f.dst})
        if (!ids.count(end))
          fail(ErrorKind::DanglingReference,
               "sequence flow references unknown node id \"" + end + "\"");
    }
  for (const auto &f : m.messageFlows) {
    for (const auto &end : {f.source, f.target})
      if (!ids.count(end))
        fail(ErrorKind::DanglingReference,
             "message flow references unknown node id \"" + end + "\"");
    const Pool *sp = m.pool_of_node(f.source);
    const Pool *tp = m.pool_of_node(f.target);
    if (sp == tp)
      fail(ErrorKind::ModelShape, "message flow must cross pools (node \"" + f.source + "\")");
  }
  std::unordered_set<std::string> objNames;
  for (const auto &d : m.dataObjects) {
    if (!objNames.insert(d.name).second)
      fail(ErrorKind::ModelShape, "duplicate data object \"" + d.name + "\"");
    if (!d.pool.empty() && !m.find_pool(d.pool))
      fail(ErrorKind::DanglingReference,
           "data object \"" + d.name + "\" references unknown pool \"" + d.pool + "\"");
  }
}

} // namespace

std::string serialize_model(const ProcessModel &m) {
  json doc;
  doc["pools"] = json::array();
  for (const auto &p : m.pools) {
    json jp;
    jp["id"] = p.id;
    jp["name"] = p.name;
    jp["nodes"] = json::array();
    for (const auto &n : p.nodes) {
      json jn;
      jn["id"] = n.id;
      jn["kind"] = node_kind_name(n.kind);
      jn["label"] = n.label;
      jn["inputs"] = n.inputs;
      jn["outputs"] = n.outputs;
      if (!n.scriptFile.empty())
        jn["scriptFile"] = n.scriptFile;
      if (n.stereotype) {
        json js;
        js["kind"] = stereo_kind_name(n.stereotype->kind);
        if (!n.stereotype->groupId.empty()) js["groupId"] = n.stereotype->groupId;
        if (!n.stereotype->keyRef.empty()) js["keyRef"] = n.stereotype->keyRef;
        if (n.stereotype->threshold) js["threshold"] = *n.stereotype->threshold;
        jn["stereotype"] = js;
      }
      jp["nodes"].push_back(jn);
    }
    jp["flows"] = json::array();
    for (const auto &f : p.flows)
      jp["flows"].push_back(json::array({f.src, f.dst}));
    doc["pools"].push_back(jp);
  }
  doc["messageFlows"] = json::array();
  for (const auto &f : m.messageFlows) {
    json jm;
    jm["source"] = f.source;
    jm["target"] = f.target;
    jm["data"] = f.data;
    doc["messageFlows"].push_back(jm);
  }
  doc["dataObjects"] = json::array();
  for (const auto &d : m.dataObjects) {
    json jd;
    jd["name"] = d.name;
    jd["pool"] = d.pool;
    if (!d.schemaFile.empty()) jd["schemaFile"] = d.schemaFile;
    if (!d.dataFile.empty()) jd["dataFile"] = d.dataFile;
    if (!d.normFile.empty()) jd["normFile"] = d.normFile;
    doc["dataObjects"].push_back(jd);
  }
  return doc.dump(2) + "\n";
}

namespace {

struct PoolGraph {
  const Pool *pool;
  std::unordered_map<std::string, int> index;     // node id -> position
  std::vector<std::vector<int>> out, in;
  std::vector<int> topo;                          // topological order, or empty if cyclic
  bool cyclic = false;

  explicit PoolGraph(const Pool &p) : pool(&p) {
    int n = static_cast<int>(p.nodes.size());
    for (int i = 0; i < n; ++i)
      index[p.nodes[i].id] = i;
    out.resize(n);
    in.resize(n);
    for (const auto &f : p.flows) {
      auto s = index.find(f.src), d = index.find(f.dst);
      if (s == index.end() || d == index.end())
        continue;  // cross-pool flows are message flows, not sequence flows
      out[s->second].push_back(d->second);
      in[d->second].push_back(s->second);
    }
    // Kahn's algorithm for the topological order.
    std::vector<int> deg(n);
    for (int i = 0; i < n; ++i)
      deg[i] = static_cast<int>(in[i].size());
    std::vector<int> queue;
    for (int i = 0; i < n; ++i)
      if (deg[i] == 0)
        queue.push_back(i);
    size_t head = 0;
    while (head < queue.size()) {
      int v = queue[head++];
      topo.push_back(v);
      for (int w : out[v])
        if (--deg[w] == 0)
          queue.push_back(w);
    }
    if (static_cast<int>(topo.size()) != n) {
      cyclic = true;
      topo.clear();
    }
  }
};

} // namespace

std::vector<StructuralIssue> validate_structure(const ProcessModel &m) {
  std::vector<StructuralIssue> issues;
  for (const auto &p : m.pools) {
    PoolGraph g(p);

    std::vector<std::string> starts;
    for (const auto &n : p.nodes)
      if (n.kind == NodeKind::StartEvent)
        starts.push_back(n.id);
    if (starts.empty())
      issues.push_back({"no-start-event", "pool \"" + p.name + "\" has no start event", {p.id}});
    if (starts.size() > 1)
      issues.push_back({"multiple-start-events",
                        "pool \"" + p.name + "\" has multiple start events", starts});

    if (g.cyclic) {
      issues.push_back({"cycle", "pool \"" + p.name + "\" contains a cycle", {p.id}});
      continue;  // reachability and gateway checks assume a DAG
    }

    if (starts.size() == 1) {
      std::vector<bool> reach(p.nodes.size(), false);
      std::vector<int> stack{g.index.at(starts[0])};
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (reach[v]) continue;
        reach[v] = true;
        for (int w : g.out[v])
          stack.push_back(w);
      }
      for (size_t i = 0; i < p.nodes.size(); ++i)
        if (!reach[i])
          issues.push_back({"unreachable",
                            "node \"" + p.nodes[i].id + "\" is not reachable from the start event",
                            {p.nodes[i].id}});
    }

    for (size_t i = 0; i < p.nodes.size(); ++i) {
      const FlowNode &n = p.nodes[i];
      if (n.kind == NodeKind::XorGateway || n.kind == NodeKind::AndGateway) {
        if (!n.inputs.empty() || !n.outputs.empty())
          issues.push_back({"gateway-data",
                            "gateway \"" + n.id + "\" must not have data associations", {n.id}});
        bool isSplit = g.out[i].size() > 1 || g.in[i].size() <= 1;
        if (isSplit && g.out[i].size() < 2)
          issues.push_back({"degenerate-gateway",
                            "gateway \"" + n.id + "\" splits into fewer than 2 branches", {n.id}});
      }
      if (n.kind == NodeKind::StartEvent && !g.in[i].empty())
        issues.push_back({"start-with-incoming",
                          "start event \"" + n.id + "\" has incoming flows", {n.id}});
    }
  }
  return issues;
}

namespace {

// Active-node evaluation for one assignment of XOR choices. `choice` maps an
// XOR split node to the chosen outgoing target. Returns active node flags.
std::vector<bool> active_nodes(const PoolGraph &g,
                               const std::unordered_map<int, int> &choice) {
  const Pool &p = *g.pool;
  std::vector<bool> active(p.nodes.size(), false);
  std::vector<bool> edgeActive(p.nodes.size() * p.nodes.size(), false);
  auto edge = [&](int s, int d) -> std::vector<bool>::reference {
    return edgeActive[s * p.nodes.size() + d];
  };
  for (int v : g.topo) {
    const FlowNode &n = p.nodes[v];
    bool act;
    if (n.kind == NodeKind::StartEvent) {
      act = true;
    } else if (n.kind == NodeKind::AndGateway && g.in[v].size() > 1) {
      act = !g.in[v].empty();
      for (int s : g.in[v])
        act = act && edge(s, v);
    } else {
      act = false;
      for (int s : g.in[v])
        act = act || edge(s, v);
    }
    active[v] = act;
    if (!act)
      continue;
    if (n.kind == NodeKind::XorGateway && g.out[v].size() > 1) {
      auto it = choice.find(v);
      int chosen = it == choice.end() ? g.out[v][0] : it->second;
      for (int d : g.out[v])
        edge(v, d) = (d == chosen);
    } else {
      for (int d : g.out[v])
        edge(v, d) = true;
    }
  }
  return active;
}

} // namespace

std::vector<Run> enumerate_runs(const ProcessModel &m, int runCap) {
  // Per pool: enumerate XOR-choice combinations, record active task sets.
  // Pools combine by Cartesian product; each combination is rendered in one
  // canonical order (pool order, then pool-local topological order), which is
  // safe because downstream analyses are dataflow-based.
  struct PoolRuns {
    std::vector<std::vector<std::string>> variants;  // each: ordered task ids
  };
  std::vector<PoolRuns> perPool;

  for (const auto &p : m.pools) {
    PoolGraph g(p);
    if (g.cyclic)
      fail(ErrorKind::ModelShape, "pool \"" + p.name + "\" contains a cycle");

    std::vector<int> xorSplits;
    for (size_t i = 0; i < p.nodes.size(); ++i)
      if (p.nodes[i].kind == NodeKind::XorGateway && g.out[i].size() > 1)
        xorSplits.push_back(static_cast<int>(i));

    long combos = 1;
    for (int v : xorSplits) {
      combos *= static_cast<long>(g.out[v].size());
      if (combos > runCap)
        fail(ErrorKind::RunExplosion,
             "run count exceeds cap of " + std::to_string(runCap) +
                 " (set PLEAK_RUN_CAP to raise it)");
    }

    PoolRuns runs;
    std::set<std::vector<std::string>> seen;
    std::vector<size_t> pick(xorSplits.size(), 0);
    while (true) {
      std::unordered_map<int, int> choice;
      for (size_t i = 0; i < xorSplits.size(); ++i)
        choice[xorSplits[i]] = g.out[xorSplits[i]][pick[i]];
      std::vector<bool> act = active_nodes(g, choice);
      std::vector<std::string> tasks;
      for (int v : g.topo)
        if (act[v] && p.nodes[v].kind == NodeKind::Task)
          tasks.push_back(p.nodes[v].id);
      if (seen.insert(tasks).second)
        runs.variants.push_back(std::move(tasks));

      // next combination
      size_t i = 0;
      for (; i < pick.size(); ++i) {
        if (++pick[i] < g.out[xorSplits[i]].size())
          break;
        pick[i] = 0;
      }
      if (i == pick.size() && !pick.empty())
        break;
      if (pick.empty())
        break;
    }
    if (runs.variants.empty())
      runs.variants.push_back({});
    perPool.push_back(std::move(runs));
  }

  // Cartesian product across pools.
  std::vector<Run> result;
  long total = 1;
  for (const auto &pr : perPool) {
    total *= static_cast<long>(pr.variants.size());
    if (total > runCap)
      fail(ErrorKind::RunExplosion,
           "run count exceeds cap of " + std::to_string(runCap) +
               " (set PLEAK_RUN_CAP to raise it)");
  }
  std::vector<size_t> pick(perPool.size(), 0);
  while (true) {
    Run r;
    for (size_t pi = 0; pi < perPool.size(); ++pi)
      for (const auto &t : perPool[pi].variants[pick[pi]])
        r.taskIds.push_back(t);
    result.push_back(std::move(r));
    size_t i = 0;
    for (; i < pick.size(); ++i) {
      if (++pick[i] < perPool[i].variants.size())
        break;
      pick[i] = 0;
    }
    if (i == pick.size())
      break;
  }
  return result;
}

} // namespace pleak::model
