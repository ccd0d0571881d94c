#pragma once

#include <string>

namespace branchnb::minilang {

struct Span {
  int line = 1;
  int column = 1;

  friend bool operator==(const Span&, const Span&) = default;
};

enum class ErrorKind {
  UndefinedVariable,
  TypeMismatch,
  DivisionByZero,
  IndexOutOfRange,
  UserError,
  ArityError,
  ParseError,
  LexError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::UndefinedVariable: return "UndefinedVariable";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::UserError: return "UserError";
    case ErrorKind::ArityError: return "ArityError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::LexError: return "LexError";
  }
  return "?";
}

inline bool error_kind_from_string(const std::string& s, ErrorKind& out) {
  for (int i = 0; i <= static_cast<int>(ErrorKind::LexError); ++i) {
    auto k = static_cast<ErrorKind>(i);
    if (s == to_string(k)) {
      out = k;
      return true;
    }
  }
  return false;
}

// Language-level failure. Thrown inside the lexer/parser/evaluator and
// reported as data by eval_cell. Only UserError carries a user-written message.
struct EvalError {
  ErrorKind kind = ErrorKind::TypeMismatch;
  std::string message;
  Span span;

  // "UserError: boom"
  std::string describe() const { return std::string(to_string(kind)) + ": " + message; }

  friend bool operator==(const EvalError&, const EvalError&) = default;
};

}  // namespace branchnb::minilang
