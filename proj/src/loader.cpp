#include "pleak/loader.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace pleak::loader {

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good())
    fail(ErrorKind::Io, "cannot open \"" + path + "\"");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

LoadedModel load_model_file(const std::string &modelPath) {
  LoadedModel out;
  out.model = std::make_shared<model::ProcessModel>(model::load_model(read_file(modelPath)));
  fs::path dir = fs::path(modelPath).parent_path();
  auto resolve = [&](const std::string &rel) { return (dir / rel).string(); };

  sql::Catalog schemas;
  sql::Database data;
  bool anySql = false;

  for (const auto &d : out.model->dataObjects) {
    if (!d.schemaFile.empty()) {
      anySql = true;
      for (auto &st : sql::parse_sql(read_file(resolve(d.schemaFile)))) {
        if (st.kind != sql::Statement::Kind::CreateTable)
          fail(ErrorKind::Binding, "schema file " + d.schemaFile + " must contain CREATE TABLE");
        schemas[st.table.name] = st.table;
      }
      if (!schemas.count(d.name))
        fail(ErrorKind::Binding,
             "schema file " + d.schemaFile + " does not define table \"" + d.name + "\"");
    }
    if (!d.dataFile.empty()) {
      if (!schemas.count(d.name))
        fail(ErrorKind::Binding, "data object \"" + d.name + "\" has data but no schema");
      data[d.name] = sql::load_table_data(schemas.at(d.name), read_file(resolve(d.dataFile)));
    }
  }

  std::map<std::string, std::string> scripts;
  for (const auto &p : out.model->pools)
    for (const auto &n : p.nodes)
      if (!n.scriptFile.empty()) {
        scripts[n.id] = read_file(resolve(n.scriptFile));
        anySql = true;
      }

  if (anySql) {
    out.workflow = sql::bind_workflow(*out.model, scripts, schemas, data);
    out.hasWorkflow = true;
  }

  for (const auto &d : out.model->dataObjects) {
    if (d.normFile.empty())
      continue;
    sensderiv::NormSpec spec = sensderiv::parse_norm(read_file(resolve(d.normFile)));
    out.rowCost[d.name] = spec.G.value_or(1.0);
    if (!out.hasWorkflow || !out.workflow.schemas.count(d.name))
      fail(ErrorKind::Binding, "norm declared for \"" + d.name + "\" but no schema is loaded");
    sensderiv::TableNorm tn;
    tn.tree = sensderiv::compile_norm(spec, out.workflow.schemas.at(d.name));
    tn.spec = std::move(spec);
    out.norms[d.name] = std::move(tn);
  }
  return out;
}

} // namespace pleak::loader
