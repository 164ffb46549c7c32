#pragma once

#include <stdexcept>
#include <string>

namespace pleak {

// Every failure the toolkit reports goes through one exception type with a
// machine-checkable kind. Messages are meant for end users; kinds are for
// callers (and tests) that need to branch on the failure class.
enum class ErrorKind {
  JsonParse,
  DanglingReference,
  ModelShape,
  ValidationFailed,
  RunExplosion,
  SqlSyntax,
  SqlType,
  UnknownIdentifier,
  CsvFormat,
  Binding,
  Evaluation,
  DivisionByZero,
  EmptyAggregate,
  UnsupportedAggregation,
  NormSyntax,
  NormInvalid,
  MissingAttackerBound,
  PolicySyntax,
  PolicyMismatch,
  InfeasibleSmoothness,
  UnknownFormat,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string message, int line = -1, int col = -1)
      : std::runtime_error(format(message, line, col)),
        kind_(kind), line_(line), col_(col) {}

  ErrorKind kind() const { return kind_; }
  int line() const { return line_; }
  int col() const { return col_; }

private:
  static std::string format(const std::string &msg, int line, int col) {
    if (line < 0)
      return msg;
    return "line " + std::to_string(line) + ":" + std::to_string(col) + ": " + msg;
  }

  ErrorKind kind_;
  int line_;
  int col_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message,
                              int line = -1, int col = -1) {
  throw Error(kind, message, line, col);
}

} // namespace pleak
