#pragma once

// Append-only interaction log (JSON lines) and the per-task measures computed
// from it: completion time, Run presses, scroll ticks, head rotation, walking
// distance and text edits.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace branchnb::telemetry {

enum class EventKind {
  RunPressed,
  Scroll,
  HeadRotation,
  Walk,
  BranchCreated,
  CellDeleted,
  CellRelocated,
  CellEdited,
  TaskStart,
  TaskEnd,
};

inline constexpr EventKind kAllKinds[] = {
    EventKind::RunPressed,   EventKind::Scroll,        EventKind::HeadRotation, EventKind::Walk,
    EventKind::BranchCreated, EventKind::CellDeleted,  EventKind::CellRelocated, EventKind::CellEdited,
    EventKind::TaskStart,    EventKind::TaskEnd,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::RunPressed: return "run_pressed";
    case EventKind::Scroll: return "scroll";
    case EventKind::HeadRotation: return "head_rotation";
    case EventKind::Walk: return "walk";
    case EventKind::BranchCreated: return "branch_created";
    case EventKind::CellDeleted: return "cell_deleted";
    case EventKind::CellRelocated: return "cell_relocated";
    case EventKind::CellEdited: return "cell_edited";
    case EventKind::TaskStart: return "task_start";
    case EventKind::TaskEnd: return "task_end";
  }
  return "?";
}

inline std::optional<EventKind> parse_kind(std::string_view s) {
  for (auto k : kAllKinds) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct Event {
  std::int64_t t_ms = 0;
  EventKind kind = EventKind::RunPressed;
  nlohmann::json payload = nlohmann::json::object();

  friend bool operator==(const Event&, const Event&) = default;
};

class TelemetryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfOrderTimestamp : public TelemetryError {
 public:
  OutOfOrderTimestamp(std::int64_t last, std::int64_t got)
      : TelemetryError("OutOfOrderTimestamp: " + std::to_string(got) + " < " + std::to_string(last)) {}
};

class MalformedLine : public TelemetryError {
 public:
  MalformedLine(std::size_t line, const std::string& why)
      : TelemetryError("MalformedLine " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// task_start / task_end out of alternation.
class UnpairedTask : public TelemetryError {
 public:
  explicit UnpairedTask(const std::string& why) : TelemetryError("UnpairedTask: " + why) {}
};

class UnknownTask : public TelemetryError {
 public:
  explicit UnknownTask(std::size_t index) : TelemetryError("UnknownTask: " + std::to_string(index)) {}
};

class Log {
 public:
  const std::vector<Event>& events() const { return events_; }

  void append(Event e) {
    if (!events_.empty() && e.t_ms < events_.back().t_ms) throw OutOfOrderTimestamp(events_.back().t_ms, e.t_ms);
    if (!e.payload.is_object()) throw TelemetryError("payload must be an object");
    if (e.kind == EventKind::TaskStart && in_task_) throw UnpairedTask("task_start inside an open task");
    if (e.kind == EventKind::TaskEnd && !in_task_) throw UnpairedTask("task_end without task_start");
    if (e.kind == EventKind::TaskStart) in_task_ = true;
    if (e.kind == EventKind::TaskEnd) in_task_ = false;
    events_.push_back(std::move(e));
  }

 private:
  std::vector<Event> events_;
  bool in_task_ = false;
};

inline std::string to_json_line(const Event& e) {
  nlohmann::ordered_json j;
  j["t_ms"] = e.t_ms;
  j["kind"] = to_string(e.kind);
  j["payload"] = nlohmann::ordered_json::parse(e.payload.dump());
  return j.dump() + "\n";
}

inline Event event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw TelemetryError("event must be an object");
  auto t = j.find("t_ms");
  if (t == j.end() || !t->is_number_integer()) throw TelemetryError("t_ms must be an integer");
  auto k = j.find("kind");
  if (k == j.end() || !k->is_string()) throw TelemetryError("kind must be a string");
  auto kind = parse_kind(k->get<std::string>());
  if (!kind) throw TelemetryError("unknown kind " + k->get<std::string>());
  Event e;
  e.t_ms = t->get<std::int64_t>();
  e.kind = *kind;
  if (auto p = j.find("payload"); p != j.end()) {
    if (!p->is_object()) throw TelemetryError("payload must be an object");
    e.payload = *p;
  }
  return e;
}

inline std::string serialize(const Log& log) {
  std::string out;
  for (const auto& e : log.events()) out += to_json_line(e);
  return out;
}

// JSONL; blank trailing lines are tolerated. Ordering and task pairing are
// checked as on append.
inline Log load_log(std::string_view bytes) {
  Log log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    std::string_view line = bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (bytes.substr(pos).find_first_not_of("\r\n") == std::string_view::npos) break;
      throw MalformedLine(line_no, "empty line");
    }
    Event e;
    try {
      e = event_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& ex) {
      throw MalformedLine(line_no, ex.what());
    } catch (const TelemetryError& ex) {
      throw MalformedLine(line_no, ex.what());
    }
    log.append(std::move(e));
  }
  return log;
}

struct MetricsReport {
  std::int64_t completion_time_ms = 0;
  std::int64_t run_count = 0;
  std::int64_t scroll_ticks = 0;
  double rotation_deg = 0;
  double walk_m = 0;
  std::int64_t text_edit_count = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

namespace detail {

inline double number_field(const Event& e, const char* key) {
  auto it = e.payload.find(key);
  if (it == e.payload.end() || !it->is_number()) return 0;
  return it->get<double>();
}

inline std::int64_t int_field(const Event& e, const char* key) {
  auto it = e.payload.find(key);
  if (it == e.payload.end() || !it->is_number()) return 0;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  return static_cast<std::int64_t>(it->get<double>());
}

}  // namespace detail

// Measures for the task_index-th (0-based) task: events with
// start.t <= t < end.t. Distances add absolute values.
inline MetricsReport compute_metrics(const std::vector<Event>& events, std::size_t task_index) {
  std::optional<std::int64_t> start;
  std::optional<std::int64_t> end;
  std::size_t seen = 0;
  for (const auto& e : events) {
    if (e.kind == EventKind::TaskStart) {
      if (seen == task_index) start = e.t_ms;
    } else if (e.kind == EventKind::TaskEnd) {
      if (seen == task_index && start) {
        end = e.t_ms;
        break;
      }
      ++seen;
    }
  }
  if (!start || !end) throw UnknownTask(task_index);

  MetricsReport r;
  r.completion_time_ms = *end - *start;
  for (const auto& e : events) {
    if (e.t_ms < *start || e.t_ms >= *end) continue;
    switch (e.kind) {
      case EventKind::RunPressed: ++r.run_count; break;
      case EventKind::Scroll: r.scroll_ticks += std::llabs(detail::int_field(e, "ticks")); break;
      case EventKind::HeadRotation: r.rotation_deg += std::fabs(detail::number_field(e, "delta_deg")); break;
      case EventKind::Walk: r.walk_m += std::fabs(detail::number_field(e, "delta_m")); break;
      case EventKind::CellEdited: ++r.text_edit_count; break;
      default: break;
    }
  }
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["completion_time_ms"] = r.completion_time_ms;
  j["run_count"] = r.run_count;
  j["scroll_ticks"] = r.scroll_ticks;
  j["rotation_deg"] = r.rotation_deg;
  j["walk_m"] = r.walk_m;
  j["text_edit_count"] = r.text_edit_count;
  return j;
}

}  // namespace branchnb::telemetry
