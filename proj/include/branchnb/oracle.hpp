#pragma once

// Brute-force check of branched execution: every full combination is run as
// an independent linear notebook and its per-window transcript compared with
// the branched engine's entry for the same lineage.

#include <optional>
#include <string>
#include <vector>

#include "branchnb/engine.hpp"
#include "branchnb/persistence.hpp"

namespace branchnb {

// One window's result as text: output lines, then "!error Kind: msg" or
// "!skipped Kind" when the lineage halted.
inline std::string render_entry(const OutputEntry& e) {
  std::string out;
  for (const auto& item : e.items) out += item + "\n";
  if (e.error) {
    if (e.upstream_failure) out += "!skipped " + std::string(minilang::to_string(e.error->kind)) + "\n";
    else out += "!error " + e.error->describe() + "\n";
  }
  return out;
}

struct Transcript {
  Combination combination;
  std::vector<std::pair<std::string, std::string>> windows;  // (window id, rendered entry)
};

// Transcripts of the branched run, one per full combination, read from state.
inline std::vector<Transcript> branched_transcripts(const Notebook& nb, const ExecState& state) {
  const auto view = outputs(nb, state);
  std::vector<Transcript> out;
  for (const auto& full : upstream_combinations(nb, nb.stages.size())) {
    Transcript t{full, {}};
    for (std::size_t s = 0; s < nb.stages.size(); ++s) {
      const auto& w = nb.stages[s].alternatives[full.choice_at(s).value_or(0)];
      const Combination want = full.prefix(s);
      std::string text = "!missing\n";
      for (const auto& e : view.at(w.id)) {
        if (e.combination == want) text = render_entry(e);
      }
      t.windows.emplace_back(w.id, std::move(text));
    }
    out.push_back(std::move(t));
  }
  return out;
}

// Transcripts from running every flattened notebook on its own.
inline std::vector<Transcript> flattened_transcripts(const Notebook& nb) {
  std::vector<Transcript> out;
  for (const auto& [combo, linear] : flatten(nb)) {
    const auto state = execute_all(linear);
    auto single = branched_transcripts(linear, state);
    single.front().combination = combo;
    out.push_back(std::move(single.front()));
  }
  return out;
}

struct Divergence {
  std::string combination;
  std::string window_id;
  std::string branched;
  std::string flattened;
};

inline std::optional<Divergence> first_divergence(const std::vector<Transcript>& branched,
                                                  const std::vector<Transcript>& flattened) {
  if (branched.size() != flattened.size()) {
    return Divergence{"", "", std::to_string(branched.size()) + " combinations\n",
                      std::to_string(flattened.size()) + " combinations\n"};
  }
  for (std::size_t i = 0; i < branched.size(); ++i) {
    const auto& b = branched[i];
    const auto& f = flattened[i];
    const auto label = b.combination.label();
    for (std::size_t s = 0; s < std::max(b.windows.size(), f.windows.size()); ++s) {
      if (s >= b.windows.size() || s >= f.windows.size() || b.windows[s] != f.windows[s]) {
        return Divergence{label, s < b.windows.size() ? b.windows[s].first : f.windows[s].first,
                          s < b.windows.size() ? b.windows[s].second : "", s < f.windows.size() ? f.windows[s].second : ""};
      }
    }
  }
  return std::nullopt;
}

// Runs both sides; nullopt when they agree byte for byte.
inline std::optional<Divergence> check_against_flatten(const Notebook& nb) {
  return first_divergence(branched_transcripts(nb, execute_all(nb)), flattened_transcripts(nb));
}

}  // namespace branchnb
