#pragma once

// Property checks over the engine. Each returns nullopt on success or a
// description of the first violation.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "branchnb/engine.hpp"
#include "branchnb/oracle.hpp"
#include "branchnb/persistence.hpp"
#include "support/generators.hpp"

namespace branchnb::check {

using Failure = std::optional<std::string>;

inline Failure check_flatten(const Notebook& nb) {
  if (auto d = check_against_flatten(nb)) {
    return "combination [" + d->combination + "] window " + d->window_id + "\nbranched:\n" + d->branched +
           "flattened:\n" + d->flattened;
  }
  return std::nullopt;
}

inline const ExecState::WindowRecord* record_for(const Notebook& nb, const ExecState& state, std::size_t stage,
                                                 const Combination& c, const std::string& window_id) {
  return state.find(branchnb::detail::lineage_key(branchnb::detail::upstream_path(nb, c, stage), window_id));
}

// After an error, the rest of the window and every downstream window of the
// same lineage are skipped with no output; lineages without an error contain
// no skipped cells.
inline Failure check_halting(const Notebook& nb, const ExecState& state) {
  std::map<Combination, bool> halted{{Combination{}, false}};
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    std::map<Combination, bool> next;
    for (const auto& c : upstream_combinations(nb, s)) {
      const bool upstream_halted = halted.at(c);
      for (std::size_t a = 0; a < nb.stages[s].alternatives.size(); ++a) {
        const auto& w = nb.stages[s].alternatives[a];
        const std::string where = "window " + w.id + " under [" + c.label() + "]";
        const auto* rec = record_for(nb, state, s, c, w.id);
        if (!rec) return "no record for " + where;
        if (upstream_halted != rec->inherited.has_value()) return "inherited halt mismatch at " + where;
        bool errored = upstream_halted;
        for (const auto& cell : w.cells) {
          const auto it = rec->cells.find(cell.id);
          if (it == rec->cells.end()) return "missing cell " + cell.id + " at " + where;
          const auto& cr = it->second;
          if (errored) {
            if (cr.outcome != ExecStatus::Skipped) return "cell " + cell.id + " ran after an error at " + where;
            if (!cr.items.empty()) return "skipped cell " + cell.id + " has output at " + where;
          } else if (cr.outcome == ExecStatus::Skipped) {
            return "cell " + cell.id + " skipped without an upstream error at " + where;
          } else if (cr.outcome == ExecStatus::Error) {
            errored = true;
          }
        }
        const auto entry = detail::Runner::assemble_entry(w, *rec, c);
        if (upstream_halted && !entry.items.empty()) return "halted lineage produced output at " + where;
        if (upstream_halted != entry.upstream_failure) return "upstream_failure flag mismatch at " + where;
        Combination ext = c;
        if (nb.stages[s].is_group()) ext.choices.emplace_back(s, a);
        next[ext] = errored;
      }
    }
    halted = std::move(next);
  }
  return std::nullopt;
}

// Every cell at stage s is visited once per upstream combination: evaluated
// when its lineage is live, reported skipped otherwise. Without errors every
// visit is an evaluation.
inline Failure check_execution_count(const Notebook& nb) {
  std::map<std::string, std::size_t> evaluated;
  std::map<std::string, std::size_t> visited;
  ExecHooks hooks;
  hooks.on_evaluate = [&](const std::string& cell) { ++evaluated[cell]; };
  hooks.on_status = [&](const std::string& cell, const Combination&, ExecStatus s) {
    if (s == ExecStatus::Ok || s == ExecStatus::Error || s == ExecStatus::Skipped) ++visited[cell];
  };
  const ExecState state = execute_all(nb, hooks);
  bool any_error = false;
  for (const auto& [key, st] : statuses(nb, state)) any_error = any_error || st == ExecStatus::Error;

  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const std::size_t expected = combination_count(nb, s);
    for (const auto& w : nb.stages[s].alternatives) {
      for (const auto& cell : w.cells) {
        std::size_t live = 0;
        for (const auto& c : upstream_combinations(nb, s)) {
          const auto* rec = record_for(nb, state, s, c, w.id);
          if (rec && rec->cells.at(cell.id).outcome != ExecStatus::Skipped) ++live;
        }
        std::ostringstream why;
        if (visited[cell.id] != expected) {
          why << "cell " << cell.id << " visited " << visited[cell.id] << " times, expected " << expected;
        } else if (evaluated[cell.id] != live) {
          why << "cell " << cell.id << " evaluated " << evaluated[cell.id] << " times, " << live << " live slots";
        } else if (!any_error && evaluated[cell.id] != expected) {
          why << "cell " << cell.id << " evaluated " << evaluated[cell.id] << " times, expected " << expected;
        }
        if (!why.str().empty()) return why.str();
      }
    }
  }
  return std::nullopt;
}

// Result count law: one entry per upstream combination in every window.
inline Failure check_result_counts(const Notebook& nb, const ExecState& state) {
  const auto view = outputs(nb, state);
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    for (const auto& w : nb.stages[s].alternatives) {
      if (view.at(w.id).size() != combination_count(nb, s)) {
        return "window " + w.id + " has " + std::to_string(view.at(w.id).size()) + " entries, expected " +
               std::to_string(combination_count(nb, s));
      }
    }
  }
  return std::nullopt;
}

// Canonical text of everything a client can observe: results table plus the
// status of every (cell, combination) slot plus staleness flags.
inline std::string observable(const Notebook& nb, const ExecState& state) {
  std::string out = export_results(nb, state, ResultsFormat::Json);
  for (const auto& [key, st] : statuses(nb, state)) {
    out += key.first + "|" + key.second + "|" + to_string(st) + "\n";
  }
  for (const auto& [wid, entries] : outputs(nb, state)) {
    for (const auto& e : entries) out += wid + "|" + e.combination.label() + (e.stale ? "|stale\n" : "|fresh\n");
  }
  return out;
}

// Notebook with a write-heavy branch group; the downstream window shows a name
// every alternative writes and probes a name only one alternative writes.
// Some alternatives also read a sibling-only name directly.
struct IsolationCase {
  Notebook nb;
  std::size_t k = 0;
  std::size_t probe_target = 0;
  std::vector<bool> injected;
  std::vector<std::string> shared_final;  // rendered last value of `shared` per alternative
};

inline IsolationCase make_isolation_case(std::uint64_t seed) {
  ProgramGen gen(seed);
  IsolationCase ic;
  ic.k = static_cast<std::size_t>(gen.pick(2, 3));
  ic.probe_target = static_cast<std::size_t>(gen.pick(0, static_cast<int>(ic.k) - 1));
  std::vector<std::vector<std::string>> per_alt(ic.k);
  std::vector<int> writes(ic.k);
  for (std::size_t i = 0; i < ic.k; ++i) {
    writes[i] = gen.pick(1, 4);
    int last_shared = 0;
    for (int j = 0; j < writes[i]; ++j) {
      const int v = gen.pick(-50, 50);
      last_shared = static_cast<int>(i) * 1000 + v;
      per_alt[i].push_back("v" + std::to_string(i) + "_" + std::to_string(j) + " = " + std::to_string(v) +
                           "\nshared = " + std::to_string(last_shared) + "\nxs = append(xs, " + std::to_string(v) +
                           ")");
    }
    ic.shared_final.push_back(std::to_string(last_shared));
  }
  ic.injected.assign(ic.k, false);
  for (std::size_t i = 0; i < ic.k; ++i) {
    if (!gen.chance(0.5)) continue;
    std::size_t j = static_cast<std::size_t>(gen.pick(0, static_cast<int>(ic.k) - 2));
    if (j >= i) ++j;
    per_alt[i].push_back("v" + std::to_string(j) + "_" + std::to_string(gen.pick(0, writes[j] - 1)));
    ic.injected[i] = true;
  }

  Notebook nb = new_linear({{"shared = -1\nxs = []"},
                            per_alt[0],
                            {"show(shared)", "len(xs)", "probe = v" + std::to_string(ic.probe_target) + "_0"}},
                           "isolation");
  const std::string group_window = nb.stages[1].alternatives[0].id;
  for (std::size_t i = 1; i < ic.k; ++i) {
    auto [next, wid] = branch(nb, group_window);
    nb = std::move(next);
    auto pos = require_window(nb, wid);
    auto& w = window_at(nb, pos);
    w.cells.clear();
    for (const auto& src : per_alt[i]) w.cells.push_back(Cell{fresh_id(nb, 'c'), src});
  }
  ic.nb = std::move(nb);
  return ic;
}

inline Failure check_isolation_case(const IsolationCase& ic) {
  const auto state = execute_all(ic.nb);
  const auto view = outputs(ic.nb, state);
  for (std::size_t i = 0; i < ic.k; ++i) {
    const auto& alt = ic.nb.stages[1].alternatives[i];
    const auto& alt_entry = view.at(alt.id).front();
    if (ic.injected[i]) {
      if (!alt_entry.error || alt_entry.error->kind != minilang::ErrorKind::UndefinedVariable) {
        return "alternative " + std::to_string(i) + " read a sibling-only name without UndefinedVariable";
      }
    } else if (alt_entry.error) {
      return "alternative " + std::to_string(i) + " failed: " + alt_entry.error->describe();
    }
    const auto& down = view.at(ic.nb.stages[2].alternatives[0].id).at(i);
    if (down.combination.choice_at(1) != i) return "downstream entries out of order";
    if (ic.injected[i]) {
      if (!down.upstream_failure || !down.items.empty()) return "downstream of an injected read was not skipped";
      continue;
    }
    if (down.items.size() != 2 || down.items[0] != ic.shared_final[i]) {
      return "lineage " + std::to_string(i) + " saw shared = " + (down.items.empty() ? "?" : down.items[0]) +
             ", expected " + ic.shared_final[i];
    }
    const bool should_see = i == ic.probe_target;
    if (should_see && down.error) return "lineage " + std::to_string(i) + " lost its own binding";
    if (!should_see && (!down.error || down.error->kind != minilang::ErrorKind::UndefinedVariable)) {
      return "lineage " + std::to_string(i) + " observed a binding written only by alternative " +
             std::to_string(ic.probe_target);
    }
  }
  return std::nullopt;
}

// Random edits interleaved with run_from; every edited cell is re-run at the
// end, then the state must equal a fresh execute_all.
inline Failure check_incremental_case(std::uint64_t seed) {
  ProgramGen gen(seed);
  Notebook nb = random_notebook(gen);
  ExecState state = execute_all(nb);
  std::set<std::string> dirty;
  const int steps = gen.pick(4, 12);
  for (int i = 0; i < steps; ++i) {
    const auto cells = cell_ids(nb);
    if (cells.empty()) break;
    const auto& target = cells[static_cast<std::size_t>(gen.pick(0, static_cast<int>(cells.size()) - 1))];
    if (gen.chance(0.6)) {
      nb = edit_cell(nb, target, gen.program());
      state = invalidate(state, nb, target);
      dirty.insert(target);
    } else {
      state = run_from(nb, state, target);
      dirty.erase(target);
    }
  }
  for (const auto& cell : cell_ids(nb)) {
    if (dirty.count(cell)) state = run_from(nb, state, cell);
  }
  const auto got = observable(nb, state);
  const auto want = observable(nb, execute_all(nb));
  if (got != want) {
    std::size_t at = 0;
    while (at < got.size() && at < want.size() && got[at] == want[at]) ++at;
    return "incremental state differs from batch near byte " + std::to_string(at) + ": got ..." +
           got.substr(at, 80) + " want ..." + want.substr(at, 80);
  }
  return std::nullopt;
}

}  // namespace branchnb::check
