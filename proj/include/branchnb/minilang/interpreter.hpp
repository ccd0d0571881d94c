#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "branchnb/minilang/error.hpp"
#include "branchnb/minilang/syntax.hpp"
#include "branchnb/minilang/value.hpp"

namespace branchnb::minilang {

// Variable store with copy-on-write sharing. Copies (forks) are observationally
// deep: a write to one copy is never visible through another.
class Environment {
 public:
  using Map = std::map<std::string, Value>;

  Environment() = default;

  const Value* find(const std::string& name) const {
    if (!bindings_) return nullptr;
    auto it = bindings_->find(name);
    return it == bindings_->end() ? nullptr : &it->second;
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  void set(const std::string& name, Value v) {
    if (!bindings_) {
      bindings_ = std::make_shared<Map>();
    } else if (bindings_.use_count() > 1) {
      bindings_ = std::make_shared<Map>(*bindings_);
    }
    (*bindings_)[name] = std::move(v);
  }

  std::size_t size() const { return bindings_ ? bindings_->size() : 0; }

  const Map& bindings() const {
    static const Map empty;
    return bindings_ ? *bindings_ : empty;
  }

  friend bool operator==(const Environment& a, const Environment& b) {
    if (a.bindings_ == b.bindings_) return true;
    const auto& ma = a.bindings();
    const auto& mb = b.bindings();
    if (ma.size() != mb.size()) return false;
    auto ib = mb.begin();
    for (const auto& [k, v] : ma) {
      if (k != ib->first || !(v == ib->second)) return false;
      ++ib;
    }
    return true;
  }

 private:
  std::shared_ptr<Map> bindings_;
};

inline Environment fork(const Environment& env) { return env; }

// Largest list range()/rand() will build.
inline constexpr std::int64_t kMaxGeneratedLength = 10'000'000;

namespace detail {

[[noreturn]] inline void raise(ErrorKind kind, std::string msg, Span at) {
  throw EvalError{kind, std::move(msg), at};
}

inline std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}
inline std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

inline std::int64_t int_pow(std::int64_t base, std::int64_t exp) {
  std::int64_t result = 1;
  while (exp > 0) {
    if (exp & 1) result = wrap_mul(result, base);
    base = wrap_mul(base, base);
    exp >>= 1;
  }
  return result;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  if (b == -1) return 0;
  std::int64_t r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

inline double float_mod(double a, double b) {
  double r = std::fmod(a, b);
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

inline const Value& need_number(const Value& v, const char* what, Span at) {
  if (!v.is_number()) raise(ErrorKind::TypeMismatch, std::string(what) + " expects a number, got " + type_name(v), at);
  return v;
}

inline const List& need_list(const Value& v, const char* what, Span at) {
  if (!v.is_list()) raise(ErrorKind::TypeMismatch, std::string(what) + " expects a list, got " + type_name(v), at);
  return v.as_list();
}

inline std::int64_t need_int(const Value& v, const char* what, Span at) {
  if (!v.is_int()) raise(ErrorKind::TypeMismatch, std::string(what) + " expects an int, got " + type_name(v), at);
  return v.as_int();
}

inline const List& need_numbers(const Value& v, const char* what, Span at) {
  const List& items = need_list(v, what, at);
  for (const auto& item : items) {
    if (!item.is_number()) {
      raise(ErrorKind::TypeMismatch, std::string(what) + " expects a list of numbers, found " + type_name(item), at);
    }
  }
  return items;
}

inline Value arith(BinaryOp op, const Value& a, const Value& b, Span at) {
  if (op == BinaryOp::Add) {
    if (a.is_text() && b.is_text()) return Value(a.as_text() + b.as_text());
    if (a.is_list() && b.is_list()) {
      List joined = a.as_list();
      joined.insert(joined.end(), b.as_list().begin(), b.as_list().end());
      return Value(std::move(joined));
    }
  }
  if (!a.is_number() || !b.is_number()) {
    raise(ErrorKind::TypeMismatch,
          std::string("unsupported operand types for ") + to_string(op) + ": " + type_name(a) + " and " + type_name(b),
          at);
  }
  if (op == BinaryOp::Div) {
    if (b.as_number() == 0) raise(ErrorKind::DivisionByZero, "division by zero", at);
    return Value(a.as_number() / b.as_number());
  }
  if (a.is_int() && b.is_int()) {
    const std::int64_t x = a.as_int();
    const std::int64_t y = b.as_int();
    switch (op) {
      case BinaryOp::Add: return Value(wrap_add(x, y));
      case BinaryOp::Sub: return Value(wrap_sub(x, y));
      case BinaryOp::Mul: return Value(wrap_mul(x, y));
      case BinaryOp::Mod:
        if (y == 0) raise(ErrorKind::DivisionByZero, "modulo by zero", at);
        return Value(floor_mod(x, y));
      case BinaryOp::Pow:
        if (y < 0) {
          if (x == 0) raise(ErrorKind::DivisionByZero, "zero raised to a negative power", at);
          return Value(std::pow(static_cast<double>(x), static_cast<double>(y)));
        }
        return Value(int_pow(x, y));
      default: break;
    }
  }
  const double x = a.as_number();
  const double y = b.as_number();
  switch (op) {
    case BinaryOp::Add: return Value(x + y);
    case BinaryOp::Sub: return Value(x - y);
    case BinaryOp::Mul: return Value(x * y);
    case BinaryOp::Mod:
      if (y == 0) raise(ErrorKind::DivisionByZero, "modulo by zero", at);
      return Value(float_mod(x, y));
    case BinaryOp::Pow:
      if (x == 0 && y < 0) raise(ErrorKind::DivisionByZero, "zero raised to a negative power", at);
      return Value(std::pow(x, y));
    default: break;
  }
  raise(ErrorKind::TypeMismatch, "bad arithmetic operator", at);
}

// -1, 0, 1 ordering for numbers (mixed Int/Float) or texts.
inline int order(const Value& a, const Value& b, BinaryOp op, Span at) {
  if (a.is_int() && b.is_int()) return a.as_int() < b.as_int() ? -1 : (a.as_int() > b.as_int() ? 1 : 0);
  if (a.is_number() && b.is_number()) {
    const double x = a.as_number();
    const double y = b.as_number();
    if (std::isnan(x) || std::isnan(y)) return 2;  // unordered
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.is_text() && b.is_text()) {
    const int c = a.as_text().compare(b.as_text());
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  raise(ErrorKind::TypeMismatch,
        std::string("cannot compare ") + type_name(a) + " and " + type_name(b) + " with " + to_string(op), at);
}

inline std::int64_t round_half_away(double d, Span at) {
  if (!std::isfinite(d) || std::fabs(d) >= 9.2233720368547758e18) {
    raise(ErrorKind::TypeMismatch, "round of non-representable float " + render_float(d), at);
  }
  return static_cast<std::int64_t>(std::round(d));
}

}  // namespace detail

// 64-bit LCG: state' = 6364136223846793005 * state + 1442695040888963407 (mod 2^64),
// each draw is (state' >> 11) / 2^53. The first draw uses the state after one step.
inline List lcg_uniform(std::uint64_t seed, std::size_t n) {
  List out;
  out.reserve(n);
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < n; ++i) {
    state = 6364136223846793005ULL * state + 1442695040888963407ULL;
    out.emplace_back(static_cast<double>(state >> 11) / 9007199254740992.0);
  }
  return out;
}

struct OutputSink {
  std::vector<std::string>* items = nullptr;
  void emit(const Value& v) const {
    if (items) items->push_back(render(v));
  }
};

namespace detail {

inline void arity(const std::string& name, std::size_t got, std::size_t lo, std::size_t hi, Span at) {
  if (got < lo || got > hi) {
    std::string want = lo == hi ? std::to_string(lo) : std::to_string(lo) + ".." + std::to_string(hi);
    raise(ErrorKind::ArityError, name + " takes " + want + " argument(s), got " + std::to_string(got), at);
  }
}

inline Value sum_of(const List& items) {
  const bool any_float = std::any_of(items.begin(), items.end(), [](const Value& v) { return v.is_float(); });
  if (!any_float) {
    std::int64_t isum = 0;
    for (const auto& v : items) isum = wrap_add(isum, v.as_int());
    return Value(isum);
  }
  // left-to-right in double, Ints promoted as encountered
  double acc = 0;
  for (const auto& v : items) acc += v.as_number();
  return Value(acc);
}

inline Value call_builtin(const std::string& name, const std::vector<Value>& args, Span at, const OutputSink& sink) {
  const std::size_t n = args.size();
  if (name == "len") {
    arity(name, n, 1, 1, at);
    if (args[0].is_list()) return Value(static_cast<std::int64_t>(args[0].as_list().size()));
    if (args[0].is_text()) return Value(static_cast<std::int64_t>(args[0].as_text().size()));
    raise(ErrorKind::TypeMismatch, std::string("len expects a list or text, got ") + type_name(args[0]), at);
  }
  if (name == "sum") {
    arity(name, n, 1, 1, at);
    return sum_of(need_numbers(args[0], "sum", at));
  }
  if (name == "min" || name == "max") {
    arity(name, n, 1, 1, at);
    const List& items = need_numbers(args[0], name.c_str(), at);
    if (items.empty()) raise(ErrorKind::TypeMismatch, "empty list", at);
    const bool want_min = name == "min";
    std::size_t best = 0;
    for (std::size_t i = 1; i < items.size(); ++i) {
      const int c = order(items[i], items[best], BinaryOp::Lt, at);
      if (c == 2) continue;
      if (want_min ? c < 0 : c > 0) best = i;
    }
    return items[best];
  }
  if (name == "mean") {
    arity(name, n, 1, 1, at);
    const List& items = need_numbers(args[0], "mean", at);
    if (items.empty()) raise(ErrorKind::TypeMismatch, "empty list", at);
    double acc = 0;
    for (const auto& v : items) acc += v.as_number();
    return Value(acc / static_cast<double>(items.size()));
  }
  if (name == "abs") {
    arity(name, n, 1, 1, at);
    const Value& v = need_number(args[0], "abs", at);
    if (v.is_int()) return Value(v.as_int() < 0 ? wrap_sub(0, v.as_int()) : v.as_int());
    return Value(std::fabs(v.as_float()));
  }
  if (name == "round") {
    arity(name, n, 1, 1, at);
    const Value& v = need_number(args[0], "round", at);
    if (v.is_int()) return v;
    return Value(round_half_away(v.as_float(), at));
  }
  if (name == "range") {
    arity(name, n, 1, 2, at);
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    if (n == 1) {
      hi = need_int(args[0], "range", at);
    } else {
      lo = need_int(args[0], "range", at);
      hi = need_int(args[1], "range", at);
    }
    List out;
    if (hi > lo) {
      const auto len = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
      if (len > static_cast<std::uint64_t>(kMaxGeneratedLength)) {
        raise(ErrorKind::IndexOutOfRange, "range length exceeds " + std::to_string(kMaxGeneratedLength), at);
      }
      out.reserve(len);
      for (std::int64_t i = lo; i < hi; ++i) out.emplace_back(i);
    }
    return Value(std::move(out));
  }
  if (name == "append") {
    arity(name, n, 2, 2, at);
    List out = need_list(args[0], "append", at);
    out.push_back(args[1]);
    return Value(std::move(out));
  }
  if (name == "concat") {
    arity(name, n, 2, 2, at);
    List out = need_list(args[0], "concat", at);
    const List& tail = need_list(args[1], "concat", at);
    out.insert(out.end(), tail.begin(), tail.end());
    return Value(std::move(out));
  }
  if (name == "sort") {
    arity(name, n, 1, 1, at);
    List out = need_list(args[0], "sort", at);
    const bool all_numbers = std::all_of(out.begin(), out.end(), [](const Value& v) { return v.is_number(); });
    const bool all_texts = std::all_of(out.begin(), out.end(), [](const Value& v) { return v.is_text(); });
    if (!all_numbers && !all_texts) raise(ErrorKind::TypeMismatch, "sort expects a list of numbers or of texts", at);
    for (const auto& v : out) {
      if (v.is_float() && std::isnan(v.as_float())) raise(ErrorKind::TypeMismatch, "sort of nan", at);
    }
    std::stable_sort(out.begin(), out.end(),
                     [&](const Value& a, const Value& b) { return order(a, b, BinaryOp::Lt, at) < 0; });
    return Value(std::move(out));
  }
  if (name == "show") {
    arity(name, n, 1, 1, at);
    sink.emit(args[0]);
    return args[0];
  }
  if (name == "str") {
    arity(name, n, 1, 1, at);
    return Value(render(args[0]));
  }
  if (name == "error") {
    arity(name, n, 1, 1, at);
    if (!args[0].is_text()) raise(ErrorKind::TypeMismatch, "error expects text", at);
    raise(ErrorKind::UserError, args[0].as_text(), at);
  }
  if (name == "rand") {
    arity(name, n, 2, 2, at);
    const std::int64_t seed = need_int(args[0], "rand", at);
    const std::int64_t count = need_int(args[1], "rand", at);
    if (count < 0) raise(ErrorKind::IndexOutOfRange, "rand count must be non-negative", at);
    if (count > kMaxGeneratedLength) {
      raise(ErrorKind::IndexOutOfRange, "rand count exceeds " + std::to_string(kMaxGeneratedLength), at);
    }
    return Value(lcg_uniform(static_cast<std::uint64_t>(seed), static_cast<std::size_t>(count)));
  }
  raise(ErrorKind::UndefinedVariable, "unknown function " + name, at);
}

class Evaluator {
 public:
  Evaluator(Environment& env, const OutputSink& sink) : env_(env), sink_(sink) {}

  Value eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Literal:
        return e.literal;
      case Expr::Kind::Ident: {
        const Value* v = env_.find(e.name);
        if (!v) raise(ErrorKind::UndefinedVariable, "undefined variable " + e.name, e.span);
        return *v;
      }
      case Expr::Kind::Unary: {
        Value v = eval(*e.children[0]);
        if (e.unary_op == UnaryOp::Not) {
          if (!v.is_bool()) raise(ErrorKind::TypeMismatch, std::string("not expects bool, got ") + type_name(v), e.span);
          return Value(!v.as_bool());
        }
        if (v.is_int()) return Value(wrap_sub(0, v.as_int()));
        if (v.is_float()) return Value(-v.as_float());
        raise(ErrorKind::TypeMismatch, std::string("cannot negate ") + type_name(v), e.span);
      }
      case Expr::Kind::Binary:
        return binary(e);
      case Expr::Kind::Call: {
        std::vector<Value> args;
        args.reserve(e.children.size());
        for (const auto& c : e.children) args.push_back(eval(*c));
        return call_builtin(e.name, args, e.span, sink_);
      }
      case Expr::Kind::Index: {
        Value target = eval(*e.children[0]);
        Value index = eval(*e.children[1]);
        if (!index.is_int()) raise(ErrorKind::TypeMismatch, std::string("index must be int, got ") + type_name(index), e.span);
        std::int64_t i = index.as_int();
        std::int64_t size = 0;
        if (target.is_list()) size = static_cast<std::int64_t>(target.as_list().size());
        else if (target.is_text()) size = static_cast<std::int64_t>(target.as_text().size());
        else raise(ErrorKind::TypeMismatch, std::string("cannot index ") + type_name(target), e.span);
        const std::int64_t resolved = i < 0 ? i + size : i;
        if (resolved < 0 || resolved >= size) {
          raise(ErrorKind::IndexOutOfRange,
                "index " + std::to_string(i) + " out of range for length " + std::to_string(size), e.span);
        }
        if (target.is_list()) return target.as_list()[static_cast<std::size_t>(resolved)];
        return Value(std::string(1, target.as_text()[static_cast<std::size_t>(resolved)]));
      }
      case Expr::Kind::ListLit: {
        List items;
        items.reserve(e.children.size());
        for (const auto& c : e.children) items.push_back(eval(*c));
        return Value(std::move(items));
      }
    }
    raise(ErrorKind::TypeMismatch, "bad expression", e.span);
  }

 private:
  Environment& env_;
  const OutputSink& sink_;

  Value binary(const Expr& e) {
    const BinaryOp op = e.binary_op;
    if (op == BinaryOp::And || op == BinaryOp::Or) {
      Value lhs = eval(*e.children[0]);
      if (!lhs.is_bool()) raise(ErrorKind::TypeMismatch, std::string(to_string(op)) + " expects bool operands", e.span);
      if (op == BinaryOp::And && !lhs.as_bool()) return Value(false);
      if (op == BinaryOp::Or && lhs.as_bool()) return Value(true);
      Value rhs = eval(*e.children[1]);
      if (!rhs.is_bool()) raise(ErrorKind::TypeMismatch, std::string(to_string(op)) + " expects bool operands", e.span);
      return rhs;
    }
    Value lhs = eval(*e.children[0]);
    Value rhs = eval(*e.children[1]);
    switch (op) {
      case BinaryOp::Eq: return Value(lhs == rhs);
      case BinaryOp::Ne: return Value(!(lhs == rhs));
      case BinaryOp::Lt: return Value(order(lhs, rhs, op, e.span) == -1);
      case BinaryOp::Le: { int c = order(lhs, rhs, op, e.span); return Value(c == -1 || c == 0); }
      case BinaryOp::Gt: return Value(order(lhs, rhs, op, e.span) == 1);
      case BinaryOp::Ge: { int c = order(lhs, rhs, op, e.span); return Value(c == 1 || c == 0); }
      default: return arith(op, lhs, rhs, e.span);
    }
  }
};

inline bool is_show_call(const Expr& e) { return e.kind == Expr::Kind::Call && e.name == "show"; }

}  // namespace detail

struct CellResult {
  Environment env;
  std::vector<std::string> outputs;
  std::optional<EvalError> error;
};

// Runs the statements against a fork of env. On error, outputs so far are kept
// and the returned environment is the input environment unchanged.
inline CellResult eval_cell(const Program& prog, const Environment& env) {
  CellResult result;
  Environment working = fork(env);
  OutputSink sink{&result.outputs};
  detail::Evaluator ev(working, sink);
  try {
    for (const auto& stmt : prog) {
      Value v = ev.eval(*stmt.expr);
      if (stmt.kind == Stmt::Kind::Assign) {
        working.set(stmt.target, std::move(v));
      } else if (!detail::is_show_call(*stmt.expr)) {
        // show(...) at statement level already displayed its argument
        sink.emit(v);
      }
    }
  } catch (const EvalError& err) {
    result.error = err;
    result.env = env;
    return result;
  }
  result.env = std::move(working);
  return result;
}

// Parse and evaluate; lex/parse failures come back in the error slot.
inline CellResult run_source(std::string_view source, const Environment& env) {
  Program prog;
  try {
    prog = parse(source);
  } catch (const EvalError& err) {
    return CellResult{env, {}, err};
  }
  return eval_cell(prog, env);
}

}  // namespace branchnb::minilang
