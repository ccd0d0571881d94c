#pragma once

// Notebook sessions behind a serialized command queue.
//
// Every state change is published as a numbered delta. A session keeps the
// view a client would have reconstructed from those deltas (`published_`) and,
// after each command or execution job, emits whatever deltas are needed to
// bring that view in line with the engine. Snapshots are that view, so
// snapshot(s) + deltas after s always equals a later snapshot.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchnb/engine.hpp"
#include "branchnb/layout.hpp"
#include "branchnb/notebook.hpp"
#include "branchnb/persistence.hpp"
#include "branchnb/telemetry.hpp"

namespace branchnb::service {

using json = nlohmann::ordered_json;

// ---- wire encoding ----------------------------------------------------------

inline json error_to_json(const EvalError& e) {
  json j;
  j["kind"] = minilang::to_string(e.kind);
  j["message"] = e.message;
  j["line"] = e.span.line;
  j["column"] = e.span.column;
  return j;
}

inline json entry_to_json(const OutputEntry& e) {
  json j;
  j["combination"] = e.combination.label();
  j["items"] = e.items;
  j["error"] = e.error ? error_to_json(*e.error) : json(nullptr);
  j["upstream_failure"] = e.upstream_failure;
  j["stale"] = e.stale;
  return j;
}

inline json rect_to_json(const layout::DesktopRect& r) {
  json j;
  j["column"] = r.column;
  j["x"] = r.x;
  j["y"] = r.y;
  j["width"] = r.width;
  j["height"] = r.height;
  return j;
}

// The client-side reducer: applies one delta to a snapshot document. This is
// the whole of what a frontend needs to stay in sync.
inline void apply_delta(json& snapshot, const json& delta) {
  snapshot["server_seq"] = delta.at("server_seq");
  const std::string change = delta.at("change").get<std::string>();
  if (change == "notebook_changed") {
    snapshot["notebook"] = delta.at("notebook");
    snapshot["exec_state_summary"] = delta.at("exec_state_summary");
    snapshot["layout"] = delta.at("layout");
  } else if (change == "status_changed") {
    snapshot["exec_state_summary"]["statuses"][delta.at("cell_id").get<std::string>()]
            [delta.at("combination").get<std::string>()] = delta.at("status");
  } else if (change == "output_added") {
    auto& list = snapshot["exec_state_summary"]["outputs"][delta.at("window_id").get<std::string>()];
    if (!list.is_array()) list = json::array();
    const auto index = delta.at("index").get<std::size_t>();
    while (list.size() <= index) list.push_back(nullptr);
    list[index] = delta.at("entry");
  } else if (change == "layout_changed") {
    snapshot["layout"][delta.at("window_id").get<std::string>()] = delta.at("rect");
  }
}

// ---- errors -------------------------------------------------------------------

struct CommandResult {
  int http_status = 200;
  json body;
};

class UnknownNotebook : public std::runtime_error {
 public:
  explicit UnknownNotebook(const std::string& id) : std::runtime_error("UnknownNotebook: " + id) {}
};

class BadCommand : public std::runtime_error {
 public:
  BadCommand(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

namespace detail {

inline std::string need_string(const json& cmd, const char* key) {
  auto it = cmd.find(key);
  if (it == cmd.end() || !it->is_string()) throw BadCommand("InvalidField", std::string("missing string field ") + key);
  return it->get<std::string>();
}

inline std::vector<std::string> need_string_list(const json& cmd, const char* key) {
  auto it = cmd.find(key);
  if (it == cmd.end() || !it->is_array()) throw BadCommand("InvalidField", std::string("missing array field ") + key);
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw BadCommand("InvalidField", std::string(key) + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline std::size_t need_index(const json& cmd, const char* key) {
  auto it = cmd.find(key);
  if (it == cmd.end() || !it->is_number_integer() || it->get<long long>() < 0) {
    throw BadCommand("InvalidField", std::string("missing non-negative integer field ") + key);
  }
  return it->get<std::size_t>();
}

inline double need_number(const json& cmd, const char* key) {
  auto it = cmd.find(key);
  if (it == cmd.end() || !it->is_number()) throw BadCommand("InvalidField", std::string("missing number field ") + key);
  return it->get<double>();
}

inline json error_body(const std::string& code, const std::string& message) {
  json j;
  j["error"] = code;
  j["message"] = message;
  return j;
}

}  // namespace detail

inline const std::set<std::string>& known_ops() {
  static const std::set<std::string> ops = {"edit_cell", "branch",      "extract",     "relocate",  "delete_cells",
                                            "delete_window", "run_from", "execute_all", "move_window"};
  return ops;
}

// ---- session ------------------------------------------------------------------

class Session {
 public:
  Session(std::string id, Notebook nb, std::string telemetry_path = {})
      : id_(std::move(id)), nb_(std::move(nb)), telemetry_path_(std::move(telemetry_path)) {
    nb_.id = id_;
    published_ = truth();
    published_["server_seq"] = 0;
    worker_ = std::thread([this] { work(); });
  }

  ~Session() {
    {
      std::lock_guard lk(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    worker_.join();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }

  CommandResult apply_command(const json& cmd) {
    std::lock_guard lk(mu_);
    std::optional<long long> client_seq;
    if (cmd.is_object()) {
      if (auto it = cmd.find("client_seq"); it != cmd.end() && it->is_number_integer()) client_seq = it->get<long long>();
    }
    if (client_seq) {
      if (auto it = acks_.find(*client_seq); it != acks_.end()) return CommandResult{409, it->second.body};
      if (!acks_.empty() && *client_seq < acks_.rbegin()->first) {
        return CommandResult{409, detail::error_body("StaleClientSeq", "client_seq already superseded")};
      }
    }
    CommandResult result = apply_locked(cmd);
    if (client_seq) {
      result.body["client_seq"] = *client_seq;
      acks_[*client_seq] = result;
    }
    return result;
  }

  json snapshot() const {
    std::lock_guard lk(mu_);
    json s = published_;
    s["notebook_id"] = id_;
    return s;
  }

  // Deltas with server_seq > since, waiting up to `wait` for one to appear.
  std::vector<json> deltas_since(std::int64_t since, std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const {
    std::unique_lock lk(events_mu_);
    events_cv_.wait_for(lk, wait, [&] { return seq_ > since || closed_; });
    std::vector<json> out;
    for (const auto& d : deltas_) {
      if (d["server_seq"].get<std::int64_t>() > since) out.push_back(d);
    }
    return out;
  }

  std::int64_t server_seq() const {
    std::lock_guard lk(events_mu_);
    return seq_;
  }

  // Blocks until every queued execution job has finished.
  void drain() {
    std::unique_lock lk(queue_mu_);
    idle_cv_.wait(lk, [&] { return jobs_.empty() && !busy_; });
  }

  std::string results(ResultsFormat format) const {
    std::lock_guard lk(mu_);
    return export_results(nb_, state_, format);
  }

  Notebook notebook() const {
    std::lock_guard lk(mu_);
    return nb_;
  }

  void ingest_telemetry(const nlohmann::json& body) {
    std::lock_guard lk(mu_);
    std::vector<telemetry::Event> events;
    if (body.is_array()) {
      for (const auto& j : body) events.push_back(telemetry::event_from_json(j));
    } else {
      events.push_back(telemetry::event_from_json(body));
    }
    // validate the whole batch before appending any of it
    telemetry::Log trial = log_;
    for (const auto& e : events) trial.append(e);
    log_ = std::move(trial);
    if (!telemetry_path_.empty()) {
      std::ofstream out(telemetry_path_, std::ios::app | std::ios::binary);
      for (const auto& e : events) out << telemetry::to_json_line(e);
    }
  }

  telemetry::Log telemetry_log() const {
    std::lock_guard lk(mu_);
    return log_;
  }

  // What a snapshot should contain right now, computed from the engine.
  json truth() const {
    json s;
    s["notebook"] = json::parse(save(nb_));
    json summary;
    json statuses = json::object();
    for (const auto& [key, st] : branchnb::statuses(nb_, state_)) {
      ExecStatus effective = st;
      if (running_.count(key)) effective = ExecStatus::Running;
      else if (auto q = queued_.find(key); q != queued_.end() && q->second > 0) effective = ExecStatus::Queued;
      statuses[key.first][key.second] = to_string(effective);
    }
    summary["statuses"] = std::move(statuses);
    json outs = json::object();
    for (const auto& [wid, entries] : outputs(nb_, state_)) {
      json list = json::array();
      for (const auto& e : entries) list.push_back(entry_to_json(e));
      outs[wid] = std::move(list);
    }
    summary["outputs"] = std::move(outs);
    s["exec_state_summary"] = std::move(summary);
    s["layout"] = layout_json();
    return s;
  }

 private:
  using SlotKey = std::pair<std::string, std::string>;

  struct Job {
    std::optional<std::string> cell_id;  // run_from when set, else execute_all
    std::vector<SlotKey> queued;
  };

  const std::string id_;
  Notebook nb_;
  ExecState state_;
  std::map<std::string, layout::DesktopRect> moved_;
  std::map<SlotKey, int> queued_;
  std::set<SlotKey> running_;
  std::map<long long, CommandResult> acks_;
  telemetry::Log log_;
  std::string telemetry_path_;
  mutable std::mutex mu_;

  json published_;
  std::vector<json> deltas_;
  std::int64_t seq_ = 0;
  bool closed_ = false;
  mutable std::mutex events_mu_;
  mutable std::condition_variable events_cv_;

  std::deque<Job> jobs_;
  bool busy_ = false;
  bool stopping_ = false;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::thread worker_;

  json layout_json() const {
    json out = json::object();
    for (const auto& [wid, rect] : layout::desktop_layout(nb_)) {
      auto it = moved_.find(wid);
      out[wid] = rect_to_json(it == moved_.end() ? rect : it->second);
    }
    return out;
  }

  // Caller holds mu_.
  void emit(json delta) {
    std::lock_guard lk(events_mu_);
    delta["server_seq"] = ++seq_;
    json ordered;
    ordered["server_seq"] = seq_;
    for (auto it = delta.begin(); it != delta.end(); ++it) {
      if (it.key() != "server_seq") ordered[it.key()] = it.value();
    }
    apply_delta(published_, ordered);
    deltas_.push_back(std::move(ordered));
    events_cv_.notify_all();
  }

  void emit_status(const std::string& cell_id, const std::string& label, const std::string& status) {
    json d;
    d["change"] = "status_changed";
    d["cell_id"] = cell_id;
    d["combination"] = label;
    d["status"] = status;
    emit(std::move(d));
  }

  // Emits the deltas that turn the published view into truth(). Caller holds mu_.
  void reconcile() {
    const json want = truth();
    const auto& have_summary = published_["exec_state_summary"];
    const auto& want_summary = want["exec_state_summary"];
    auto full = [&] {
      json d;
      d["change"] = "notebook_changed";
      d["notebook"] = want["notebook"];
      d["exec_state_summary"] = want_summary;
      d["layout"] = want["layout"];
      emit(std::move(d));
    };
    if (published_["notebook"] != want["notebook"]) return full();

    const auto& have_st = have_summary["statuses"];
    const auto& want_st = want_summary["statuses"];
    if (have_st.size() != want_st.size()) return full();
    for (auto it = want_st.begin(); it != want_st.end(); ++it) {
      if (!have_st.contains(it.key()) || have_st[it.key()].size() != it.value().size()) return full();
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        if (!have_st[it.key()].contains(jt.key())) return full();
      }
    }
    const auto& have_out = have_summary["outputs"];
    const auto& want_out = want_summary["outputs"];
    if (have_out.size() != want_out.size()) return full();
    for (auto it = want_out.begin(); it != want_out.end(); ++it) {
      if (!have_out.contains(it.key()) || have_out[it.key()].size() > it.value().size()) return full();
    }

    std::vector<json> pending;
    for (auto it = want_st.begin(); it != want_st.end(); ++it) {
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        if (published_["exec_state_summary"]["statuses"][it.key()][jt.key()] != jt.value()) {
          json d;
          d["change"] = "status_changed";
          d["cell_id"] = it.key();
          d["combination"] = jt.key();
          d["status"] = jt.value();
          pending.push_back(std::move(d));
        }
      }
    }
    for (auto it = want_out.begin(); it != want_out.end(); ++it) {
      const auto& have_list = published_["exec_state_summary"]["outputs"][it.key()];
      for (std::size_t i = 0; i < it.value().size(); ++i) {
        if (i < have_list.size() && have_list[i] == it.value()[i]) continue;
        json d;
        d["change"] = "output_added";
        d["window_id"] = it.key();
        d["index"] = i;
        d["entry"] = it.value()[i];
        pending.push_back(std::move(d));
      }
    }
    const auto& have_layout = published_["layout"];
    for (auto it = want["layout"].begin(); it != want["layout"].end(); ++it) {
      if (!have_layout.contains(it.key()) || have_layout[it.key()] != it.value()) {
        json d;
        d["change"] = "layout_changed";
        d["window_id"] = it.key();
        d["rect"] = it.value();
        pending.push_back(std::move(d));
      }
    }
    for (auto& d : pending) emit(std::move(d));
  }

  json ack(json result = json::object()) {
    json body;
    body["server_seq"] = server_seq();
    body["result"] = std::move(result);
    return body;
  }

  // Structural edit plus the invalidation it implies. Caller holds mu_.
  void commit(Notebook next, ExecState state) {
    prune(state, next);
    nb_ = std::move(next);
    state_ = std::move(state);
    std::erase_if(moved_, [&](const auto& kv) { return !find_window(nb_, kv.first); });
    reconcile();
  }

  CommandResult apply_locked(const json& cmd) {
    try {
      if (!cmd.is_object()) throw BadCommand("InvalidCommand", "command must be an object");
      auto op_it = cmd.find("op");
      if (op_it == cmd.end() || !op_it->is_string()) throw BadCommand("UnknownOp", "missing op");
      const std::string op = op_it->get<std::string>();
      if (!known_ops().count(op)) throw BadCommand("UnknownOp", "unknown op " + op);

      if (op == "edit_cell") {
        const auto cell_id = detail::need_string(cmd, "cell_id");
        Notebook next = edit_cell(nb_, cell_id, detail::need_string(cmd, "source"));
        ExecState st = invalidate(state_, next, cell_id);
        commit(std::move(next), std::move(st));
        return {200, ack()};
      }
      if (op == "branch") {
        auto [next, new_id] = branch(nb_, detail::need_string(cmd, "window_id"));
        commit(std::move(next), state_);
        json r;
        r["window_id"] = new_id;
        return {200, ack(r)};
      }
      if (op == "extract") {
        const auto wid = detail::need_string(cmd, "window_id");
        const auto cells = detail::need_string_list(cmd, "cell_ids");
        const auto pos = require_window(nb_, wid);
        std::size_t first = window_at(nb_, pos).cells.size();
        for (std::size_t i = 0; i < window_at(nb_, pos).cells.size(); ++i) {
          for (const auto& c : cells) {
            if (window_at(nb_, pos).cells[i].id == c) first = std::min(first, i);
          }
        }
        auto [next, new_id] = extract(nb_, wid, cells);
        ExecState st = invalidate_from(state_, next, wid, first);
        commit(std::move(next), std::move(st));
        json r;
        r["window_id"] = new_id;
        return {200, ack(r)};
      }
      if (op == "relocate") {
        const auto cell_id = detail::need_string(cmd, "cell_id");
        const auto target = detail::need_string(cmd, "target_window_id");
        const auto index = detail::need_index(cmd, "target_index");
        const auto from = require_cell(nb_, cell_id);
        const std::string source_window = nb_.stages[from.stage].alternatives[from.alt].id;
        Notebook next = relocate(nb_, cell_id, target, index);
        ExecState st = invalidate_from(state_, next, source_window, from.index);
        st = invalidate_from(st, next, target, index);
        commit(std::move(next), std::move(st));
        return {200, ack()};
      }
      if (op == "delete_cells") {
        const auto cells = detail::need_string_list(cmd, "cell_ids");
        std::map<std::string, std::size_t> first_by_window;
        for (const auto& c : cells) {
          const auto pos = require_cell(nb_, c);
          const auto& wid = nb_.stages[pos.stage].alternatives[pos.alt].id;
          auto [it, fresh] = first_by_window.emplace(wid, pos.index);
          if (!fresh) it->second = std::min(it->second, pos.index);
        }
        Notebook next = delete_cells(nb_, cells);
        ExecState st = state_;
        for (const auto& [wid, first] : first_by_window) st = invalidate_from(st, next, wid, first);
        commit(std::move(next), std::move(st));
        return {200, ack()};
      }
      if (op == "delete_window") {
        Notebook next = delete_window(nb_, detail::need_string(cmd, "window_id"));
        commit(std::move(next), state_);
        return {200, ack()};
      }
      if (op == "move_window") {
        const auto wid = detail::need_string(cmd, "window_id");
        require_window(nb_, wid);
        auto rect = layout::desktop_layout(nb_).at(wid);
        rect.x = static_cast<long long>(detail::need_number(cmd, "x"));
        rect.y = static_cast<long long>(detail::need_number(cmd, "y"));
        moved_[wid] = rect;
        reconcile();
        return {200, ack()};
      }
      // run_from / execute_all
      Job job;
      if (op == "run_from") {
        job.cell_id = detail::need_string(cmd, "cell_id");
        require_cell(nb_, *job.cell_id);
      }
      for (const auto& [cell, combo] : planned_slots(nb_, state_, job.cell_id)) {
        SlotKey key{cell, combo.label()};
        job.queued.push_back(key);
        ++queued_[key];
      }
      reconcile();
      {
        std::lock_guard qlk(queue_mu_);
        jobs_.push_back(std::move(job));
      }
      queue_cv_.notify_all();
      json r;
      r["queued"] = true;
      return {202, ack(r)};
    } catch (const BadCommand& e) {
      return {400, detail::error_body(e.code(), e.what())};
    } catch (const NotebookError& e) {
      return {400, detail::error_body(to_string(e.kind()), e.what())};
    } catch (const layout::LayoutError& e) {
      return {400, detail::error_body("LayoutError", e.what())};
    }
  }

  void run_job(const Job& job) {
    std::lock_guard lk(mu_);
    for (const auto& key : job.queued) {
      if (auto it = queued_.find(key); it != queued_.end() && --it->second <= 0) queued_.erase(it);
    }
    if (job.cell_id && !find_cell(nb_, *job.cell_id)) {
      // the cell was deleted while the job waited
      reconcile();
      return;
    }
    ExecHooks hooks;
    hooks.on_status = [&](const std::string& cell, const Combination& c, ExecStatus s) {
      SlotKey key{cell, c.label()};
      if (s == ExecStatus::Running) running_.insert(key);
      else running_.erase(key);
      emit_status(cell, key.second, to_string(s));
    };
    hooks.on_output = [&](const std::string& wid, std::size_t stage, const OutputEntry& e) {
      json d;
      d["change"] = "output_added";
      d["window_id"] = wid;
      d["index"] = combination_ordinal(nb_, e.combination, stage);
      d["entry"] = entry_to_json(e);
      emit(std::move(d));
    };
    state_ = job.cell_id ? run_from(nb_, state_, *job.cell_id, hooks) : execute_all(nb_, hooks);
    running_.clear();
    reconcile();
  }

  void work() {
    for (;;) {
      Job job;
      {
        std::unique_lock lk(queue_mu_);
        queue_cv_.wait(lk, [&] { return stopping_ || !jobs_.empty(); });
        if (stopping_) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
        busy_ = true;
      }
      run_job(job);
      {
        std::lock_guard lk(queue_mu_);
        busy_ = false;
      }
      idle_cv_.notify_all();
    }
  }
};

// Registry of open notebooks.
class Service {
 public:
  Session& open(const std::string& id, Notebook nb, std::string telemetry_path = {}) {
    std::lock_guard lk(mu_);
    auto& slot = sessions_[id];
    slot = std::make_unique<Session>(id, std::move(nb), std::move(telemetry_path));
    return *slot;
  }

  Session& session(const std::string& id) {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownNotebook(id);
    return *it->second;
  }

  CommandResult apply_command(const std::string& id, const json& cmd) {
    Session* s = nullptr;
    try {
      s = &session(id);
    } catch (const UnknownNotebook& e) {
      return {404, detail::error_body("UnknownNotebook", e.what())};
    }
    return s->apply_command(cmd);
  }

  json snapshot(const std::string& id) { return session(id).snapshot(); }

 private:
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

}  // namespace branchnb::service
