#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pleak/sql.hpp"

namespace pleak::sensglobal {

// A sensitivity bound: a natural number, infinity, or n/a for tasks the
// analysis does not cover (SUM/MIN/MAX).
struct Bound {
  enum Kind { Finite, Infinite, NotApplicable } kind = NotApplicable;
  long value = 0;

  static Bound finite(long v) { return {Finite, v}; }
  static Bound inf() { return {Infinite, 0}; }
  static Bound na() { return {NotApplicable, 0}; }

  std::string str() const {
    switch (kind) {
    case Finite: return std::to_string(value);
    case Infinite: return "inf";
    case NotApplicable: return "n/a";
    }
    return "?";
  }
};

struct GlobalSensitivityMatrix {
  std::vector<std::string> tables;        // rows: workflow input tables
  std::vector<std::string> taskColumns;   // task labels (or ids), plus "workflow" last
  std::vector<std::vector<Bound>> cells;  // [table][task]

  std::string to_csv() const;
  std::string to_text() const;
  std::string to_json() const;
  Bound at(const std::string &table, const std::string &taskColumn) const;
};

// Instance-independent COUNT sensitivity per task and for the whole workflow.
// Tasks whose query aggregates with SUM/MIN/MAX get n/a cells; pass a target
// task id to demand analysis of one task, which then rejects unsupported
// aggregations outright.
GlobalSensitivityMatrix global_sensitivity(const sql::SqlWorkflow &wf,
                                           const std::optional<std::string> &targetTask = {});

} // namespace pleak::sensglobal
