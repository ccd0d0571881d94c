#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

namespace branchnb::minilang {

struct Value;
using List = std::vector<Value>;

struct Null {
  friend bool operator==(Null, Null) { return true; }
};

// Lists are immutable and shared between copies; builtins that "modify" a list
// build a new one.
struct ListRef {
  std::shared_ptr<const List> items;

  const List& get() const {
    static const List empty;
    return items ? *items : empty;
  }
  // Identity only; Value's == compares contents.
  friend bool operator==(const ListRef& a, const ListRef& b) { return a.items == b.items; }
};

struct Value {
  std::variant<Null, bool, std::int64_t, double, std::string, ListRef> data;

  Value() = default;
  Value(Null) {}
  Value(bool b) : data(b) {}
  Value(std::int64_t i) : data(i) {}
  Value(int i) : data(static_cast<std::int64_t>(i)) {}
  Value(double d) : data(d) {}
  Value(std::string s) : data(std::move(s)) {}
  Value(const char* s) : data(std::string(s)) {}
  Value(List items) : data(ListRef{std::make_shared<const List>(std::move(items))}) {}

  bool is_null() const { return std::holds_alternative<Null>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
  bool is_float() const { return std::holds_alternative<double>(data); }
  bool is_number() const { return is_int() || is_float(); }
  bool is_text() const { return std::holds_alternative<std::string>(data); }
  bool is_list() const { return std::holds_alternative<ListRef>(data); }

  bool as_bool() const { return std::get<bool>(data); }
  std::int64_t as_int() const { return std::get<std::int64_t>(data); }
  double as_float() const { return std::get<double>(data); }
  // Numeric value with Int promoted to Float.
  double as_number() const { return is_int() ? static_cast<double>(as_int()) : as_float(); }
  const std::string& as_text() const { return std::get<std::string>(data); }
  const List& as_list() const { return std::get<ListRef>(data).get(); }
};

// Structural equality. Int and Float never compare equal, even for 2 and 2.0.
// Float equality is IEEE equality (nan != nan).
inline bool operator==(const Value& a, const Value& b) {
  if (a.data.index() != b.data.index()) return false;
  if (a.is_list()) {
    const auto& la = a.as_list();
    const auto& lb = b.as_list();
    if (la.size() != lb.size()) return false;
    for (std::size_t i = 0; i < la.size(); ++i) {
      if (!(la[i] == lb[i])) return false;
    }
    return true;
  }
  return a.data == b.data;
}

inline const char* type_name(const Value& v) {
  switch (v.data.index()) {
    case 0: return "null";
    case 1: return "bool";
    case 2: return "int";
    case 3: return "float";
    case 4: return "text";
    case 5: return "list";
  }
  return "?";
}

// Shortest decimal text that parses back to the same double; integral values
// keep a trailing ".0" so they read as floats.
inline std::string render_float(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d < 0 ? "-inf" : "inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

inline std::string quote_text(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

namespace detail {

inline void render_into(std::string& out, const Value& v, bool nested) {
  if (v.is_null()) {
    out += "null";
  } else if (v.is_bool()) {
    out += v.as_bool() ? "true" : "false";
  } else if (v.is_int()) {
    out += std::to_string(v.as_int());
  } else if (v.is_float()) {
    out += render_float(v.as_float());
  } else if (v.is_text()) {
    out += nested ? quote_text(v.as_text()) : v.as_text();
  } else {
    out += '[';
    bool first = true;
    for (const auto& item : v.as_list()) {
      if (!first) out += ", ";
      first = false;
      render_into(out, item, true);
    }
    out += ']';
  }
}

}  // namespace detail

// Canonical display form of a value.
inline std::string render(const Value& v) {
  std::string out;
  detail::render_into(out, v, false);
  return out;
}

}  // namespace branchnb::minilang
