#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pleak/error.hpp"

namespace pleak::model {

enum class NodeKind { Task, StartEvent, EndEvent, XorGateway, AndGateway };

const char *node_kind_name(NodeKind k);

enum class StereoKind {
  Mpc,
  SSSharing,
  SSReconstruction,
  PKEncrypt,
  PKDecrypt,
  SKEncrypt,
  SKDecrypt,
};

const char *stereo_kind_name(StereoKind k);

struct Stereotype {
  StereoKind kind;
  std::string groupId;              // joint-computation group (MPC, secret sharing)
  std::string keyRef;               // encryption key name
  std::optional<int> threshold;     // shares needed for reconstruction
};

struct FlowNode {
  std::string id;
  NodeKind kind = NodeKind::Task;
  std::string label;
  std::vector<std::string> inputs;   // data-object names read
  std::vector<std::string> outputs;  // data-object names written
  std::optional<Stereotype> stereotype;
  std::string scriptFile;            // optional SQL script, resolved by the CLI
};

struct SequenceFlow {
  std::string src;
  std::string dst;
};

struct Pool {
  std::string id;
  std::string name;  // stakeholder name
  std::vector<FlowNode> nodes;
  std::vector<SequenceFlow> flows;
};

struct MessageFlow {
  std::string source;  // node id
  std::string target;  // node id in a different pool
  std::vector<std::string> data;  // carried data-object names
};

struct DataObject {
  std::string name;
  std::string pool;  // pool id
  std::string schemaFile;
  std::string dataFile;
  std::string normFile;
};

struct ProcessModel {
  std::vector<Pool> pools;
  std::vector<MessageFlow> messageFlows;
  std::vector<DataObject> dataObjects;

  // Lookup helpers built at load time.
  const FlowNode *find_node(const std::string &id) const;
  const Pool *pool_of_node(const std::string &nodeId) const;
  const Pool *find_pool(const std::string &id) const;
  const DataObject *find_data_object(const std::string &name) const;

  // Data-object names in a stable order: declaration order first, then any
  // name that only appears in node I/O, in model order.
  std::vector<std::string> object_names() const;
};

struct StructuralIssue {
  std::string code;     // "no-start-event", "multiple-start-events", ...
  std::string message;
  std::vector<std::string> nodeIds;
};

struct Run {
  std::vector<std::string> taskIds;  // canonical topological order
};

inline constexpr int kDefaultRunCap = 1024;

ProcessModel load_model(const std::string &jsonText);
std::string serialize_model(const ProcessModel &model);

std::vector<StructuralIssue> validate_structure(const ProcessModel &model);

std::vector<Run> enumerate_runs(const ProcessModel &model, int runCap = kDefaultRunCap);

} // namespace pleak::model
