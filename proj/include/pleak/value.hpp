#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "pleak/error.hpp"

namespace pleak {

enum class ColType { Int8, Float8, Text, Bool };

inline const char *type_name(ColType t) {
  switch (t) {
  case ColType::Int8: return "INT8";
  case ColType::Float8: return "FLOAT8";
  case ColType::Text: return "TEXT";
  case ColType::Bool: return "BOOL";
  }
  return "?";
}

inline bool is_numeric(ColType t) {
  return t == ColType::Int8 || t == ColType::Float8;
}

// Runtime value. The variant order mirrors ColType.
using Value = std::variant<std::int64_t, double, std::string, bool>;

inline ColType value_type(const Value &v) {
  switch (v.index()) {
  case 0: return ColType::Int8;
  case 1: return ColType::Float8;
  case 2: return ColType::Text;
  default: return ColType::Bool;
  }
}

inline double as_double(const Value &v) {
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  if (std::holds_alternative<double>(v))
    return std::get<double>(v);
  if (std::holds_alternative<bool>(v))
    return std::get<bool>(v) ? 1.0 : 0.0;
  fail(ErrorKind::Evaluation, "TEXT value used in numeric context");
}

inline bool as_bool(const Value &v) {
  if (std::holds_alternative<bool>(v))
    return std::get<bool>(v);
  fail(ErrorKind::Evaluation, "non-boolean value used as condition");
}

std::string value_to_string(const Value &v);

} // namespace pleak
