#pragma once

#include <string>
#include <vector>

#include "pleak/sql.hpp"

namespace pleak::sql {

enum class TokKind {
  Ident,
  Keyword,
  IntLit,
  FloatLit,
  StringLit,
  Symbol,  // punctuation and operators
  End,
};

struct Token {
  TokKind kind = TokKind::End;
  std::string text;   // keywords upper-cased, symbols verbatim
  std::string raw;    // original spelling (keywords only)
  std::int64_t intVal = 0;
  double floatVal = 0;
  SourcePos pos;
};

std::vector<Token> lex_sql(const std::string &text);

} // namespace pleak::sql
