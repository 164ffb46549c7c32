#pragma once

#include <map>
#include <memory>
#include <string>

#include "pleak/model.hpp"
#include "pleak/smooth.hpp"
#include "pleak/sql.hpp"

namespace pleak::loader {

std::string read_file(const std::string &path);

// A model file plus everything it references: schemas, CSV instances, task
// scripts and table norms, all resolved relative to the model's directory.
struct LoadedModel {
  std::shared_ptr<model::ProcessModel> model;
  sql::SqlWorkflow workflow;         // bound when the model carries scripts
  bool hasWorkflow = false;
  sensderiv::NormSet norms;          // tables with a normFile
  std::map<std::string, double> rowCost;  // table -> G (1.0 when absent)
};

LoadedModel load_model_file(const std::string &modelPath);

} // namespace pleak::loader
