#pragma once

#include <string>
#include <vector>

#include "pleak/model.hpp"

namespace pleak::pebpmn {

struct ValidationIssue {
  std::string code;  // V1..V5
  std::string message;
  std::vector<std::string> nodeIds;
};

enum class Cell { Visible, Hidden, Absent };

inline char cell_char(Cell c) {
  switch (c) {
  case Cell::Visible: return 'V';
  case Cell::Hidden: return 'H';
  case Cell::Absent: return '-';
  }
  return '?';
}

// Matrix over stakeholders (pool names plus the synthetic "shared over" row)
// and data-object names.
struct DisclosureReport {
  std::vector<std::string> rows;     // stakeholder names, "shared over" last
  std::vector<std::string> columns;  // data-object names
  std::vector<std::vector<Cell>> cells;

  Cell at(const std::string &row, const std::string &col) const;
  std::string to_csv() const;
  std::string to_json() const;
  std::string to_text() const;
};

enum class Dep { Direct, Indirect, None };

inline char dep_char(Dep d) {
  switch (d) {
  case Dep::Direct: return 'D';
  case Dep::Indirect: return 'I';
  case Dep::None: return '-';
  }
  return '?';
}

struct DependencyMatrix {
  std::vector<std::string> objects;
  std::vector<std::vector<Dep>> cells;  // row = source object, column = derived object

  Dep at(const std::string &from, const std::string &to) const;
  std::string to_csv() const;
  std::string to_json() const;
  std::string to_text() const;
};

// Stereotype rules V1..V5 over a structurally valid model.
std::vector<ValidationIssue> validate_stereotypes(const model::ProcessModel &m);

DisclosureReport disclosure_report(const model::ProcessModel &m);

DependencyMatrix dependency_matrix(const model::ProcessModel &m);

} // namespace pleak::pebpmn
