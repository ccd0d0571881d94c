#pragma once

// Branch-aware notebook execution.
//
// A lineage is one choice of alternative at every stage up to some point. Each
// window runs once per upstream combination, starting from the environment
// its lineage produced, and environments are forked whenever a lineage
// extends into more than one alternative so siblings never share state.
//
// Results and checkpoints are keyed by the lineage path (the ids of the windows
// executed before, plus the window itself), not by stage indices, so that
// structural edits elsewhere in the notebook leave unaffected results valid.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "branchnb/minilang/interpreter.hpp"
#include "branchnb/notebook.hpp"

namespace branchnb {

using minilang::Environment;
using minilang::EvalError;

// One alternative index per branch-group stage of a prefix, ascending by stage.
struct Combination {
  std::vector<std::pair<std::size_t, std::size_t>> choices;  // (stage index, alternative index)

  // "s3=1;s5=0"; empty for a branch-free prefix.
  std::string label() const {
    std::string out;
    for (const auto& [stage, alt] : choices) {
      if (!out.empty()) out += ';';
      out += 's' + std::to_string(stage) + '=' + std::to_string(alt);
    }
    return out;
  }

  std::optional<std::size_t> choice_at(std::size_t stage) const {
    for (const auto& [s, a] : choices) {
      if (s == stage) return a;
    }
    return std::nullopt;
  }

  // Restriction to the stages strictly before `stage`.
  Combination prefix(std::size_t stage) const {
    Combination out;
    for (const auto& c : choices) {
      if (c.first < stage) out.choices.push_back(c);
    }
    return out;
  }

  friend bool operator==(const Combination&, const Combination&) = default;
  friend auto operator<=>(const Combination&, const Combination&) = default;
};

// Cartesian product over the branch groups before stage_index, earliest stage
// varying slowest and alternatives ascending.
inline std::vector<Combination> upstream_combinations(const Notebook& nb, std::size_t stage_index) {
  std::vector<Combination> out{Combination{}};
  const std::size_t limit = std::min(stage_index, nb.stages.size());
  for (std::size_t s = 0; s < limit; ++s) {
    const std::size_t k = nb.stages[s].group_size();
    if (k < 2) continue;
    std::vector<Combination> next;
    next.reserve(out.size() * k);
    for (const auto& c : out) {
      for (std::size_t a = 0; a < k; ++a) {
        Combination ext = c;
        ext.choices.emplace_back(s, a);
        next.push_back(std::move(ext));
      }
    }
    out = std::move(next);
  }
  return out;
}

// Number of upstream combinations for a stage: product of group sizes before it.
inline std::size_t combination_count(const Notebook& nb, std::size_t stage_index) {
  std::size_t n = 1;
  for (std::size_t s = 0; s < std::min(stage_index, nb.stages.size()); ++s) n *= nb.stages[s].group_size();
  return n;
}

// Position of a combination within upstream_combinations(nb, stage_index).
inline std::size_t combination_ordinal(const Notebook& nb, const Combination& c, std::size_t stage_index) {
  std::size_t idx = 0;
  for (std::size_t s = 0; s < std::min(stage_index, nb.stages.size()); ++s) {
    const std::size_t k = nb.stages[s].group_size();
    if (k < 2) continue;
    idx = idx * k + c.choice_at(s).value_or(0);
  }
  return idx;
}

enum class ExecStatus { Idle, Stale, Queued, Running, Ok, Error, Skipped };

inline const char* to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Idle: return "idle";
    case ExecStatus::Stale: return "stale";
    case ExecStatus::Queued: return "queued";
    case ExecStatus::Running: return "running";
    case ExecStatus::Ok: return "ok";
    case ExecStatus::Error: return "error";
    case ExecStatus::Skipped: return "skipped";
  }
  return "?";
}

// Result of one window under one upstream combination.
struct OutputEntry {
  Combination combination;
  std::vector<std::string> items;
  // Set when a cell of this window failed, or (upstream_failure) when the
  // lineage had already halted before reaching the window.
  std::optional<EvalError> error;
  bool upstream_failure = false;
  bool stale = false;

  friend bool operator==(const OutputEntry&, const OutputEntry&) = default;
};

// Environment flowing along a lineage, or the error that halted it.
struct Flow {
  Environment env;
  std::optional<EvalError> halted;
};

struct ExecHooks {
  // Called once per cell evaluation (instrumentation).
  std::function<void(const std::string& cell_id)> on_evaluate;
  std::function<void(const std::string& cell_id, const Combination&, ExecStatus)> on_status;
  // Called when a window finishes under one combination.
  std::function<void(const std::string& window_id, std::size_t stage, const OutputEntry&)> on_output;
};

class ExecState {
 public:
  struct CellRecord {
    ExecStatus outcome = ExecStatus::Ok;  // Ok, Error or Skipped
    bool stale = false;
    std::vector<std::string> items;
    std::optional<EvalError> error;
  };

  struct WindowRecord {
    bool stale = false;
    std::optional<EvalError> inherited;  // lineage halted upstream of this window
    std::map<std::string, CellRecord> cells;
    // Flow before cell k; key == cell count is the flow leaving the window.
    std::map<std::size_t, Flow> checkpoints;
  };

  const WindowRecord* find(const std::string& key) const {
    auto it = windows_.find(key);
    return it == windows_.end() ? nullptr : &it->second;
  }
  WindowRecord& at(const std::string& key) { return windows_[key]; }

  std::size_t record_count() const { return windows_.size(); }

  std::size_t checkpoint_count() const {
    std::size_t n = 0;
    for (const auto& [k, rec] : windows_) n += rec.checkpoints.size();
    return n;
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& [key, rec] : windows_) fn(key, rec);
  }

  void erase_if(const std::function<bool(const std::string&)>& pred) {
    std::erase_if(windows_, [&](const auto& kv) { return pred(kv.first); });
  }

 private:
  std::map<std::string, WindowRecord> windows_;
};

namespace detail {

inline constexpr char kKeySep = '\x1f';

inline std::string lineage_key(const std::vector<std::string>& upstream_path, const std::string& window_id) {
  std::string key;
  for (const auto& w : upstream_path) {
    key += w;
    key += kKeySep;
  }
  key += window_id;
  return key;
}

inline std::vector<std::string_view> split_key(std::string_view key) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = key.find(kKeySep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(key.substr(start));
      return parts;
    }
    parts.push_back(key.substr(start, pos - start));
    start = pos + 1;
  }
}

// Window ids executed before stage_index under the combination.
inline std::vector<std::string> upstream_path(const Notebook& nb, const Combination& c, std::size_t stage_index) {
  std::vector<std::string> path;
  for (std::size_t s = 0; s < stage_index; ++s) {
    path.push_back(nb.stages[s].alternatives[c.choice_at(s).value_or(0)].id);
  }
  return path;
}

struct Lineage {
  Combination combination;  // over groups before the current stage
  std::vector<std::string> path;
  Flow flow;
};

class Runner {
 public:
  Runner(const Notebook& nb, ExecState& state, const ExecHooks& hooks) : nb_(nb), state_(state), hooks_(hooks) {}

  // Runs window `pos` under lineage `in`, starting at cell `start` from `flow`.
  Flow run_window(WindowPos pos, const Lineage& in, std::size_t start, Flow flow) {
    const Window& w = window_at(nb_, pos);
    auto& rec = state_.at(lineage_key(in.path, w.id));
    if (start == 0) {
      rec = ExecState::WindowRecord{};
      rec.inherited = flow.halted;
    }
    rec.stale = false;
    for (auto it = rec.checkpoints.begin(); it != rec.checkpoints.end();) {
      it = it->first > start ? rec.checkpoints.erase(it) : std::next(it);
    }
    for (std::size_t i = start; i < w.cells.size(); ++i) {
      const Cell& cell = w.cells[i];
      rec.checkpoints[i] = flow;
      ExecState::CellRecord cr;
      if (flow.halted) {
        cr.outcome = ExecStatus::Skipped;
        cr.error = flow.halted;
      } else {
        status(cell.id, in.combination, ExecStatus::Running);
        if (hooks_.on_evaluate) hooks_.on_evaluate(cell.id);
        auto result = evaluate(cell.source, flow.env);
        cr.items = std::move(result.outputs);
        if (result.error) {
          cr.outcome = ExecStatus::Error;
          cr.error = result.error;
          flow.halted = result.error;
        } else {
          cr.outcome = ExecStatus::Ok;
          flow.env = std::move(result.env);
        }
      }
      status(cell.id, in.combination, cr.outcome);
      rec.cells[cell.id] = std::move(cr);
    }
    rec.checkpoints[w.cells.size()] = flow;
    std::erase_if(rec.cells, [&](const auto& kv) {
      return std::none_of(w.cells.begin(), w.cells.end(), [&](const Cell& c) { return c.id == kv.first; });
    });
    if (hooks_.on_output) {
      hooks_.on_output(w.id, pos.stage, assemble_entry(w, rec, in.combination));
    }
    return flow;
  }

  // Stage-major sweep from `first_stage` over the given lineages (which must be
  // in canonical order).
  void sweep(std::size_t first_stage, std::vector<Lineage> frontier) {
    for (std::size_t s = first_stage; s < nb_.stages.size(); ++s) {
      const Stage& stage = nb_.stages[s];
      std::vector<Lineage> next;
      next.reserve(frontier.size() * stage.group_size());
      for (const auto& lin : frontier) {
        for (std::size_t a = 0; a < stage.alternatives.size(); ++a) {
          Flow out = run_window(WindowPos{s, a}, lin, 0, lin.flow);
          next.push_back(extend(lin, s, a, std::move(out)));
        }
      }
      frontier = std::move(next);
    }
  }

  Lineage extend(const Lineage& lin, std::size_t s, std::size_t a, Flow flow) const {
    Lineage ext;
    ext.combination = lin.combination;
    if (nb_.stages[s].is_group()) ext.combination.choices.emplace_back(s, a);
    ext.path = lin.path;
    ext.path.push_back(nb_.stages[s].alternatives[a].id);
    ext.flow = std::move(flow);
    return ext;
  }

  static OutputEntry assemble_entry(const Window& w, const ExecState::WindowRecord& rec, const Combination& c) {
    OutputEntry e;
    e.combination = c;
    e.stale = rec.stale;
    for (const auto& cell : w.cells) {
      auto it = rec.cells.find(cell.id);
      if (it == rec.cells.end()) {
        e.stale = true;
        continue;
      }
      const auto& cr = it->second;
      e.stale = e.stale || cr.stale;
      e.items.insert(e.items.end(), cr.items.begin(), cr.items.end());
      if (cr.outcome == ExecStatus::Error && !e.error) e.error = cr.error;
    }
    if (!e.error && rec.inherited) {
      e.error = rec.inherited;
      e.upstream_failure = true;
    }
    return e;
  }

 private:
  const Notebook& nb_;
  ExecState& state_;
  const ExecHooks& hooks_;
  std::map<std::string, minilang::Program> programs_;
  std::map<std::string, EvalError> parse_errors_;

  void status(const std::string& cell_id, const Combination& c, ExecStatus s) const {
    if (hooks_.on_status) hooks_.on_status(cell_id, c, s);
  }

  minilang::CellResult evaluate(const std::string& source, const Environment& env) {
    if (auto it = parse_errors_.find(source); it != parse_errors_.end()) {
      return minilang::CellResult{env, {}, it->second};
    }
    auto it = programs_.find(source);
    if (it == programs_.end()) {
      try {
        it = programs_.emplace(source, minilang::parse(source)).first;
      } catch (const EvalError& err) {
        parse_errors_.emplace(source, err);
        return minilang::CellResult{env, {}, err};
      }
    }
    return minilang::eval_cell(it->second, env);
  }
};

}  // namespace detail

// Runs every window once per upstream combination, replacing any prior state.
inline ExecState execute_all(const Notebook& nb, const ExecHooks& hooks = {}) {
  ExecState state;
  detail::Runner runner(nb, state, hooks);
  runner.sweep(0, {detail::Lineage{}});
  return state;
}

inline ExecState execute_all(const Notebook& nb, const ExecState& /*prior*/, const ExecHooks& hooks = {}) {
  return execute_all(nb, hooks);
}

// Where a run_from would resume, or nullopt when some lineage lacks the
// checkpoint before the cell (the caller must run everything).
struct ResumePoint {
  CellPos cell;
  std::vector<Combination> combinations;  // lineages reaching the cell's window
};

inline std::optional<ResumePoint> resume_point(const Notebook& nb, const ExecState& state, const std::string& cell_id) {
  const CellPos pos = require_cell(nb, cell_id);
  ResumePoint rp{pos, upstream_combinations(nb, pos.stage)};
  const std::string& wid = nb.stages[pos.stage].alternatives[pos.alt].id;
  for (const auto& c : rp.combinations) {
    const auto* rec = state.find(detail::lineage_key(detail::upstream_path(nb, c, pos.stage), wid));
    if (!rec || !rec->checkpoints.count(pos.index)) return std::nullopt;
  }
  return rp;
}

// Drops records whose lineage mentions a window that no longer exists.
inline void prune(ExecState& state, const Notebook& nb) {
  std::set<std::string> windows;
  for (const auto& st : nb.stages) {
    for (const auto& w : st.alternatives) windows.insert(w.id);
  }
  state.erase_if([&](const std::string& key) {
    for (auto part : detail::split_key(key)) {
      if (!windows.count(std::string(part))) return true;
    }
    return false;
  });
}

// Re-executes the cell, the rest of its window and every downstream stage, for
// each lineage through the cell's window, resuming from the checkpoint taken
// just before the cell. Falls back to execute_all when a checkpoint is missing.
inline ExecState run_from(const Notebook& nb, const ExecState& state, const std::string& cell_id,
                          const ExecHooks& hooks = {}) {
  auto rp = resume_point(nb, state, cell_id);
  if (!rp) return execute_all(nb, hooks);

  ExecState out = state;
  prune(out, nb);
  detail::Runner runner(nb, out, hooks);
  const CellPos pos = rp->cell;
  std::vector<detail::Lineage> frontier;
  for (const auto& c : rp->combinations) {
    detail::Lineage lin;
    lin.combination = c;
    lin.path = detail::upstream_path(nb, c, pos.stage);
    const auto& wid = nb.stages[pos.stage].alternatives[pos.alt].id;
    Flow start = out.at(detail::lineage_key(lin.path, wid)).checkpoints.at(pos.index);
    Flow done = runner.run_window(WindowPos{pos.stage, pos.alt}, lin, pos.index, std::move(start));
    frontier.push_back(runner.extend(lin, pos.stage, pos.alt, std::move(done)));
  }
  runner.sweep(pos.stage + 1, std::move(frontier));
  return out;
}

// Marks cells from index `from` of the window, and everything downstream of
// the window in lineages through it, stale. Checkpoints after boundary `from`
// are dropped; the one before cell `from` stays valid because nothing before it
// changed. Outputs are kept and flagged stale.
inline ExecState invalidate_from(const ExecState& state, const Notebook& nb, const std::string& window_id,
                                 std::size_t from) {
  const WindowPos wpos = require_window(nb, window_id);
  const Window& w = window_at(nb, wpos);
  std::set<std::string> doomed_cells;
  for (std::size_t i = from; i < w.cells.size(); ++i) doomed_cells.insert(w.cells[i].id);

  ExecState out = state;
  out.for_each([&](const std::string& key, ExecState::WindowRecord& rec) {
    const auto parts = detail::split_key(key);
    const bool is_window = parts.back() == window_id;
    const bool downstream =
        !is_window && std::find(parts.begin(), parts.end() - 1, std::string_view(window_id)) != parts.end() - 1;
    if (is_window) {
      rec.stale = true;
      for (auto& [cid, cr] : rec.cells) {
        if (doomed_cells.count(cid)) cr.stale = true;
      }
      std::erase_if(rec.checkpoints, [&](const auto& kv) { return kv.first > from; });
    } else if (downstream) {
      rec.stale = true;
      for (auto& [cid, cr] : rec.cells) cr.stale = true;
      rec.checkpoints.clear();
    }
  });
  return out;
}

inline ExecState invalidate(const ExecState& state, const Notebook& nb, const std::string& edited_cell_id) {
  const CellPos pos = require_cell(nb, edited_cell_id);
  return invalidate_from(state, nb, nb.stages[pos.stage].alternatives[pos.alt].id, pos.index);
}

// ---- views over the current notebook -------------------------------------

// Entries per window, one per upstream combination that has been executed,
// in canonical combination order.
using OutputsView = std::map<std::string, std::vector<OutputEntry>>;

inline OutputsView outputs(const Notebook& nb, const ExecState& state) {
  OutputsView view;
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto combos = upstream_combinations(nb, s);
    for (const auto& w : nb.stages[s].alternatives) {
      auto& list = view[w.id];
      for (const auto& c : combos) {
        const auto* rec = state.find(detail::lineage_key(detail::upstream_path(nb, c, s), w.id));
        if (rec) list.push_back(detail::Runner::assemble_entry(w, *rec, c));
      }
    }
  }
  return view;
}

// (cell id, combination label) -> status.
using StatusView = std::map<std::pair<std::string, std::string>, ExecStatus>;

inline StatusView statuses(const Notebook& nb, const ExecState& state) {
  StatusView view;
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto combos = upstream_combinations(nb, s);
    for (const auto& w : nb.stages[s].alternatives) {
      for (const auto& c : combos) {
        const auto* rec = state.find(detail::lineage_key(detail::upstream_path(nb, c, s), w.id));
        const std::string label = c.label();
        for (const auto& cell : w.cells) {
          ExecStatus st = ExecStatus::Idle;
          if (rec) {
            auto it = rec->cells.find(cell.id);
            if (it != rec->cells.end()) st = it->second.stale ? ExecStatus::Stale : it->second.outcome;
          }
          view[{cell.id, label}] = st;
        }
      }
    }
  }
  return view;
}

// Every (cell, combination) slot a run would execute, in execution order.
// With a cell id, the slots of run_from(cell) (or of a full run if it would
// fall back); without, those of execute_all.
inline std::vector<std::pair<std::string, Combination>> planned_slots(const Notebook& nb, const ExecState& state,
                                                                      const std::optional<std::string>& cell_id) {
  std::optional<ResumePoint> rp;
  if (cell_id) rp = resume_point(nb, state, *cell_id);
  std::vector<std::pair<std::string, Combination>> slots;
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    if (rp && s < rp->cell.stage) continue;
    const auto combos = upstream_combinations(nb, s);
    for (const auto& c : combos) {
      if (rp && s > rp->cell.stage && nb.stages[rp->cell.stage].is_group() &&
          c.choice_at(rp->cell.stage) != rp->cell.alt) {
        continue;
      }
      for (std::size_t a = 0; a < nb.stages[s].alternatives.size(); ++a) {
        if (rp && s == rp->cell.stage && a != rp->cell.alt) continue;
        const auto& cells = nb.stages[s].alternatives[a].cells;
        const std::size_t first = rp && s == rp->cell.stage ? rp->cell.index : 0;
        for (std::size_t i = first; i < cells.size(); ++i) slots.emplace_back(cells[i].id, c);
      }
    }
  }
  return slots;
}

}  // namespace branchnb
