#pragma once

// Lexer, AST and recursive-descent parser for the cell language.
//
// Precedence, lowest first:
//   or, and, not, comparisons (non-associative), + -, * / %, unary -,
//   ** (right-assoc), call/index, atoms.

#include <charconv>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "branchnb/minilang/error.hpp"
#include "branchnb/minilang/value.hpp"

namespace branchnb::minilang {

enum class Tok {
  Int, Float, Text, Ident,
  True, False, NullKw, And, Or, Not,
  Plus, Minus, Star, Slash, Percent, StarStar,
  EqEq, NotEq, Less, LessEq, Greater, GreaterEq, Assign,
  LParen, RParen, LBracket, RBracket, Comma,
  Separator,  // newline or ';'
  End,
};

struct Token {
  Tok kind;
  std::string text;  // identifier name or decoded text literal
  std::int64_t int_value = 0;
  double float_value = 0;
  Span span;
};

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  int depth = 0;  // newlines inside () or [] are whitespace
  std::size_t i = 0;

  auto fail = [&](const std::string& msg, Span at) -> EvalError {
    return EvalError{ErrorKind::LexError, msg, at};
  };
  auto advance = [&](std::size_t n = 1) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  auto is_ident_start = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };

  while (i < src.size()) {
    const char c = src[i];
    const Span at{line, col};
    if (c == ' ' || c == '\t' || c == '\r') {
      advance();
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance();
      continue;
    }
    if (c == '\n' || c == ';') {
      advance();
      if (c == ';' || depth == 0) out.push_back({Tok::Separator, {}, 0, 0, at});
      continue;
    }
    if (is_digit(c)) {
      std::size_t j = i;
      while (j < src.size() && is_digit(src[j])) ++j;
      bool is_float = false;
      if (j + 1 < src.size() && src[j] == '.' && is_digit(src[j + 1])) {
        is_float = true;
        ++j;
        while (j < src.size() && is_digit(src[j])) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && is_digit(src[k])) {
          is_float = true;
          j = k;
          while (j < src.size() && is_digit(src[j])) ++j;
        }
      }
      const std::string_view lexeme = src.substr(i, j - i);
      Token t{is_float ? Tok::Float : Tok::Int, std::string(lexeme), 0, 0, at};
      if (is_float) {
        auto r = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), t.float_value);
        if (r.ec != std::errc{}) throw fail("float literal out of range: " + std::string(lexeme), at);
      } else {
        auto r = std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), t.int_value);
        if (r.ec != std::errc{}) throw fail("integer literal out of range: " + std::string(lexeme), at);
      }
      advance(j - i);
      out.push_back(std::move(t));
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && (is_ident_start(src[j]) || is_digit(src[j]))) ++j;
      std::string word(src.substr(i, j - i));
      advance(j - i);
      Tok kind = Tok::Ident;
      if (word == "true") kind = Tok::True;
      else if (word == "false") kind = Tok::False;
      else if (word == "null") kind = Tok::NullKw;
      else if (word == "and") kind = Tok::And;
      else if (word == "or") kind = Tok::Or;
      else if (word == "not") kind = Tok::Not;
      out.push_back({kind, std::move(word), 0, 0, at});
      continue;
    }
    if (c == '"') {
      advance();
      std::string text;
      for (;;) {
        if (i >= src.size() || src[i] == '\n') throw fail("unterminated text literal", at);
        const char d = src[i];
        if (d == '"') {
          advance();
          break;
        }
        if (d == '\\') {
          if (i + 1 >= src.size()) throw fail("unterminated text literal", at);
          const char e = src[i + 1];
          const Span esc_at{line, col};
          if (e == '"') text += '"';
          else if (e == '\\') text += '\\';
          else if (e == 'n') text += '\n';
          else throw fail(std::string("unknown escape \\") + e, esc_at);
          advance(2);
          continue;
        }
        text += d;
        advance();
      }
      out.push_back({Tok::Text, std::move(text), 0, 0, at});
      continue;
    }

    auto two = [&](char next) { return i + 1 < src.size() && src[i + 1] == next; };
    Tok kind;
    std::size_t len = 1;
    switch (c) {
      case '+': kind = Tok::Plus; break;
      case '-': kind = Tok::Minus; break;
      case '*':
        if (two('*')) { kind = Tok::StarStar; len = 2; } else { kind = Tok::Star; }
        break;
      case '/': kind = Tok::Slash; break;
      case '%': kind = Tok::Percent; break;
      case '=':
        if (two('=')) { kind = Tok::EqEq; len = 2; } else { kind = Tok::Assign; }
        break;
      case '!':
        if (!two('=')) throw fail("unexpected character '!'", at);
        kind = Tok::NotEq;
        len = 2;
        break;
      case '<':
        if (two('=')) { kind = Tok::LessEq; len = 2; } else { kind = Tok::Less; }
        break;
      case '>':
        if (two('=')) { kind = Tok::GreaterEq; len = 2; } else { kind = Tok::Greater; }
        break;
      case '(': kind = Tok::LParen; ++depth; break;
      case ')': kind = Tok::RParen; if (depth > 0) --depth; break;
      case '[': kind = Tok::LBracket; ++depth; break;
      case ']': kind = Tok::RBracket; if (depth > 0) --depth; break;
      case ',': kind = Tok::Comma; break;
      default: {
        const unsigned char uc = static_cast<unsigned char>(c);
        std::string shown = uc >= 0x20 && uc < 0x7f ? std::string(1, c) : "\\x" + std::to_string(uc);
        throw fail("unexpected character '" + shown + "'", at);
      }
    }
    out.push_back({kind, std::string(src.substr(i, len)), 0, 0, at});
    advance(len);
  }
  out.push_back({Tok::End, {}, 0, 0, Span{line, col}});
  return out;
}

enum class UnaryOp { Neg, Not };
enum class BinaryOp { Or, And, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div, Mod, Pow };

inline const char* to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Or: return "or";
    case BinaryOp::And: return "and";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
    case BinaryOp::Pow: return "**";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Literal, Ident, Unary, Binary, Call, Index, ListLit };

  Kind kind = Kind::Literal;
  Span span;
  Value literal;           // Literal
  std::string name;        // Ident, Call
  UnaryOp unary_op{};      // Unary
  BinaryOp binary_op{};    // Binary
  std::vector<ExprPtr> children;  // operands, call args, [target, index], list items
};

struct Stmt {
  enum class Kind { Assign, ExprStmt };

  Kind kind = Kind::ExprStmt;
  Span span;
  std::string target;  // Assign only
  ExprPtr expr;
};

using Program = std::vector<Stmt>;

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Program program() {
    Program prog;
    skip_separators();
    while (peek().kind != Tok::End) {
      prog.push_back(statement());
      if (peek().kind == Tok::End) break;
      if (peek().kind != Tok::Separator) unexpected("expected newline or ';'");
      skip_separators();
    }
    return prog;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& take() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    take();
    return true;
  }
  void skip_separators() {
    while (peek().kind == Tok::Separator) take();
  }

  [[noreturn]] void unexpected(const std::string& expected) const {
    const Token& t = peek();
    std::string got = t.kind == Tok::End ? "end of input"
                      : t.kind == Tok::Separator ? "end of statement"
                                                 : "'" + t.text + "'";
    throw EvalError{ErrorKind::ParseError, expected + ", found " + got, t.span};
  }

  void expect(Tok k, const char* what) {
    if (!accept(k)) unexpected(std::string("expected ") + what);
  }

  static ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs, Span at) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Binary;
    e->span = at;
    e->binary_op = op;
    e->children = {std::move(lhs), std::move(rhs)};
    return e;
  }

  static ExprPtr make_unary(UnaryOp op, ExprPtr operand, Span at) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Unary;
    e->span = at;
    e->unary_op = op;
    e->children = {std::move(operand)};
    return e;
  }

  Stmt statement() {
    Stmt s;
    s.span = peek().span;
    if (peek().kind == Tok::Ident && peek(1).kind == Tok::Assign) {
      s.kind = Stmt::Kind::Assign;
      s.target = take().text;
      take();
    }
    s.expr = expression();
    return s;
  }

  ExprPtr expression() { return or_expr(); }

  ExprPtr or_expr() {
    auto lhs = and_expr();
    while (peek().kind == Tok::Or) {
      Span at = take().span;
      lhs = make_binary(BinaryOp::Or, lhs, and_expr(), at);
    }
    return lhs;
  }

  ExprPtr and_expr() {
    auto lhs = not_expr();
    while (peek().kind == Tok::And) {
      Span at = take().span;
      lhs = make_binary(BinaryOp::And, lhs, not_expr(), at);
    }
    return lhs;
  }

  ExprPtr not_expr() {
    if (peek().kind == Tok::Not) {
      Span at = take().span;
      return make_unary(UnaryOp::Not, not_expr(), at);
    }
    return comparison();
  }

  static bool comparison_op(Tok k, BinaryOp& op) {
    switch (k) {
      case Tok::EqEq: op = BinaryOp::Eq; return true;
      case Tok::NotEq: op = BinaryOp::Ne; return true;
      case Tok::Less: op = BinaryOp::Lt; return true;
      case Tok::LessEq: op = BinaryOp::Le; return true;
      case Tok::Greater: op = BinaryOp::Gt; return true;
      case Tok::GreaterEq: op = BinaryOp::Ge; return true;
      default: return false;
    }
  }

  ExprPtr comparison() {
    auto lhs = additive();
    BinaryOp op;
    if (comparison_op(peek().kind, op)) {
      Span at = take().span;
      lhs = make_binary(op, lhs, additive(), at);
      if (comparison_op(peek().kind, op)) unexpected("comparison operators do not chain");
    }
    return lhs;
  }

  ExprPtr additive() {
    auto lhs = multiplicative();
    for (;;) {
      BinaryOp op;
      if (peek().kind == Tok::Plus) op = BinaryOp::Add;
      else if (peek().kind == Tok::Minus) op = BinaryOp::Sub;
      else return lhs;
      Span at = take().span;
      lhs = make_binary(op, lhs, multiplicative(), at);
    }
  }

  ExprPtr multiplicative() {
    auto lhs = unary();
    for (;;) {
      BinaryOp op;
      if (peek().kind == Tok::Star) op = BinaryOp::Mul;
      else if (peek().kind == Tok::Slash) op = BinaryOp::Div;
      else if (peek().kind == Tok::Percent) op = BinaryOp::Mod;
      else return lhs;
      Span at = take().span;
      lhs = make_binary(op, lhs, unary(), at);
    }
  }

  ExprPtr unary() {
    if (peek().kind == Tok::Minus) {
      Span at = take().span;
      return make_unary(UnaryOp::Neg, unary(), at);
    }
    return power();
  }

  ExprPtr power() {
    auto base = postfix();
    if (peek().kind == Tok::StarStar) {
      Span at = take().span;
      // right operand may itself be a signed power: 2 ** -1, 2 ** 3 ** 2
      return make_binary(BinaryOp::Pow, base, unary(), at);
    }
    return base;
  }

  ExprPtr postfix() {
    auto e = atom();
    for (;;) {
      if (peek().kind == Tok::LParen) {
        if (e->kind != Expr::Kind::Ident) unexpected("only named builtins can be called");
        take();
        auto call = std::make_shared<Expr>();
        call->kind = Expr::Kind::Call;
        call->span = e->span;
        call->name = e->name;
        if (peek().kind != Tok::RParen) {
          call->children.push_back(expression());
          while (accept(Tok::Comma)) call->children.push_back(expression());
        }
        expect(Tok::RParen, "')'");
        e = call;
      } else if (peek().kind == Tok::LBracket) {
        Span at = take().span;
        auto idx = std::make_shared<Expr>();
        idx->kind = Expr::Kind::Index;
        idx->span = at;
        idx->children = {e, expression()};
        expect(Tok::RBracket, "']'");
        e = idx;
      } else {
        return e;
      }
    }
  }

  ExprPtr atom() {
    const Token& t = peek();
    auto e = std::make_shared<Expr>();
    e->span = t.span;
    switch (t.kind) {
      case Tok::Int: e->literal = Value(t.int_value); break;
      case Tok::Float: e->literal = Value(t.float_value); break;
      case Tok::Text: e->literal = Value(t.text); break;
      case Tok::True: e->literal = Value(true); break;
      case Tok::False: e->literal = Value(false); break;
      case Tok::NullKw: e->literal = Value(Null{}); break;
      case Tok::Ident:
        e->kind = Expr::Kind::Ident;
        e->name = t.text;
        break;
      case Tok::LParen: {
        take();
        auto inner = expression();
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::LBracket: {
        take();
        e->kind = Expr::Kind::ListLit;
        if (peek().kind != Tok::RBracket) {
          e->children.push_back(expression());
          while (accept(Tok::Comma)) {
            if (peek().kind == Tok::RBracket) break;
            e->children.push_back(expression());
          }
        }
        expect(Tok::RBracket, "']'");
        return e;
      }
      default:
        unexpected("expected an expression");
    }
    take();
    return e;
  }
};

// Throws EvalError (LexError or ParseError).
inline Program parse(std::string_view source) { return Parser(lex(source)).program(); }

namespace detail {

inline void print_expr(std::string& out, const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Literal:
      if (e.literal.is_text()) out += quote_text(e.literal.as_text());
      else out += render(e.literal);
      return;
    case Expr::Kind::Ident:
      out += e.name;
      return;
    case Expr::Kind::Unary:
      out += e.unary_op == UnaryOp::Neg ? "(-" : "(not ";
      print_expr(out, *e.children[0]);
      out += ')';
      return;
    case Expr::Kind::Binary:
      out += '(';
      print_expr(out, *e.children[0]);
      out += ' ';
      out += to_string(e.binary_op);
      out += ' ';
      print_expr(out, *e.children[1]);
      out += ')';
      return;
    case Expr::Kind::Call:
    case Expr::Kind::ListLit: {
      if (e.kind == Expr::Kind::Call) out += e.name + "(";
      else out += '[';
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += ", ";
        print_expr(out, *e.children[i]);
      }
      out += e.kind == Expr::Kind::Call ? ')' : ']';
      return;
    }
    case Expr::Kind::Index:
      print_expr(out, *e.children[0]);
      out += '[';
      print_expr(out, *e.children[1]);
      out += ']';
      return;
  }
}

}  // namespace detail

// Fully parenthesised source text; parsing it yields the same tree (spans aside).
inline std::string to_source(const Program& prog) {
  std::string out;
  for (const auto& s : prog) {
    if (s.kind == Stmt::Kind::Assign) out += s.target + " = ";
    detail::print_expr(out, *s.expr);
    out += '\n';
  }
  return out;
}

// Tree equality ignoring spans.
inline bool same_tree(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case Expr::Kind::Literal:
      // nan literals cannot be written, so value equality is fine here
      if (!(a.literal == b.literal)) return false;
      break;
    case Expr::Kind::Ident:
    case Expr::Kind::Call:
      if (a.name != b.name) return false;
      break;
    case Expr::Kind::Unary:
      if (a.unary_op != b.unary_op) return false;
      break;
    case Expr::Kind::Binary:
      if (a.binary_op != b.binary_op) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!same_tree(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

inline bool same_program(const Program& a, const Program& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].kind != b[i].kind || a[i].target != b[i].target) return false;
    if (!same_tree(*a[i].expr, *b[i].expr)) return false;
  }
  return true;
}

}  // namespace branchnb::minilang
