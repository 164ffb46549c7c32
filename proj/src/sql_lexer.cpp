#include "sql_lexer.hpp"

#include <cctype>
#include <set>
#include <unordered_set>

namespace pleak::sql {

namespace {

const std::unordered_set<std::string> kKeywords = {
    "SELECT", "DISTINCT", "INTO", "FROM", "WHERE", "AS", "AND", "OR", "NOT",
    "CREATE", "TABLE", "FUNCTION", "RETURNS", "COUNT", "SUM", "MIN", "MAX",
    "TRUE", "FALSE", "INT8", "FLOAT8", "TEXT", "BOOL",
};

std::string upper(std::string s) {
  for (char &c : s)
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

} // namespace

std::vector<Token> lex_sql(const std::string &text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto advance = [&](size_t n = 1) {
    for (size_t k = 0; k < n && i < text.size(); ++k, ++i) {
      if (text[i] == '\n') { ++line; col = 1; } else ++col;
    }
  };

  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance();
      continue;
    }
    // -- line comments
    if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      while (i < text.size() && text[i] != '\n')
        advance();
      continue;
    }
    Token t;
    t.pos = {line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = i;
      while (i < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_'))
        advance();
      std::string word = text.substr(start, i - start);
      std::string up = upper(word);
      if (kKeywords.count(up)) {
        t.kind = TokKind::Keyword;
        t.text = up;
        t.raw = word;
      } else {
        t.kind = TokKind::Ident;
        t.text = word;
      }
      out.push_back(std::move(t));
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      size_t start = i;
      bool isFloat = false;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
        advance();
      if (i < text.size() && text[i] == '.' &&
          !(i + 1 < text.size() && text[i + 1] == '.')) {
        isFloat = true;
        advance();
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
          advance();
      }
      if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        size_t save = i;
        advance();
        if (i < text.size() && (text[i] == '+' || text[i] == '-'))
          advance();
        if (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
          isFloat = true;
          while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
            advance();
        } else {
          i = save;  // not an exponent after all
        }
      }
      std::string num = text.substr(start, i - start);
      if (isFloat) {
        t.kind = TokKind::FloatLit;
        t.floatVal = std::stod(num);
      } else {
        t.kind = TokKind::IntLit;
        t.intVal = std::stoll(num);
      }
      t.text = num;
      out.push_back(std::move(t));
      continue;
    }
    if (c == '\'') {
      advance();
      std::string s;
      while (true) {
        if (i >= text.size())
          fail(ErrorKind::SqlSyntax, "unterminated string literal", t.pos.line, t.pos.col);
        if (text[i] == '\'') {
          if (i + 1 < text.size() && text[i + 1] == '\'') {  // '' escape
            s += '\'';
            advance(2);
            continue;
          }
          advance();
          break;
        }
        s += text[i];
        advance();
      }
      t.kind = TokKind::StringLit;
      t.text = s;
      out.push_back(std::move(t));
      continue;
    }
    // multi-char operators first
    static const std::vector<std::string> twoChar = {"<=", ">=", "<>", "!="};
    bool matched = false;
    for (const auto &opTxt : twoChar) {
      if (text.compare(i, opTxt.size(), opTxt) == 0) {
        t.kind = TokKind::Symbol;
        t.text = opTxt == "!=" ? "<>" : opTxt;
        advance(opTxt.size());
        out.push_back(std::move(t));
        matched = true;
        break;
      }
    }
    if (matched)
      continue;
    static const std::set<char> singles = {'(', ')', ',', ';', '.', '+', '-', '*',
                                           '/', '^', '<', '>', '='};
    if (singles.count(c)) {
      t.kind = TokKind::Symbol;
      t.text = std::string(1, c);
      advance();
      out.push_back(std::move(t));
      continue;
    }
    fail(ErrorKind::SqlSyntax, std::string("unexpected character '") + c + "'", line, col);
  }
  Token end;
  end.kind = TokKind::End;
  end.pos = {line, col};
  out.push_back(end);
  return out;
}

} // namespace pleak::sql
