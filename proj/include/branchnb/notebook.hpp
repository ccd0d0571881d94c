#pragma once

// Staged notebook graph: ordered stages, each holding one or more alternative
// windows of ordered cells. A stage with two or more alternatives is a branch
// group; the stage after it consumes every alternative, so merging is implicit.
//
// All editing operations are value-semantic: they take a notebook by const
// reference and return the edited copy.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace branchnb {

struct Cell {
  std::string id;
  std::string source;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct Window {
  std::string id;
  std::string label;
  std::vector<Cell> cells;

  friend bool operator==(const Window&, const Window&) = default;
};

struct Stage {
  std::string id;
  std::vector<Window> alternatives;

  bool is_group() const { return alternatives.size() >= 2; }
  std::size_t group_size() const { return alternatives.size(); }

  friend bool operator==(const Stage&, const Stage&) = default;
};

struct Notebook {
  std::string id;
  int version = 1;
  std::string title;
  std::vector<Stage> stages;
  // Unknown top-level keys from the file, as serialized JSON text, keyed by name.
  std::map<std::string, std::string> extra;
  // Next numeric suffix for generated ids. Never serialized; monotone within
  // a session so a deleted id is never handed out again.
  std::uint64_t next_serial = 1;

  // Structural equality: the id counter and in-memory id are not part of the
  // document.
  friend bool operator==(const Notebook& a, const Notebook& b) {
    return a.version == b.version && a.title == b.title && a.stages == b.stages &&
           a.extra == b.extra;
  }
};

enum class NotebookErrorKind {
  UnknownWindow,
  UnknownCell,
  EmptySelection,
  IndexOutOfRange,
  DuplicateId,
  EmptyStage,
};

inline const char* to_string(NotebookErrorKind k) {
  switch (k) {
    case NotebookErrorKind::UnknownWindow: return "UnknownWindow";
    case NotebookErrorKind::UnknownCell: return "UnknownCell";
    case NotebookErrorKind::EmptySelection: return "EmptySelection";
    case NotebookErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case NotebookErrorKind::DuplicateId: return "DuplicateId";
    case NotebookErrorKind::EmptyStage: return "EmptyStage";
  }
  return "?";
}

class NotebookError : public std::runtime_error {
 public:
  NotebookError(NotebookErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  NotebookErrorKind kind() const { return kind_; }

 private:
  NotebookErrorKind kind_;
};

// Position of a window inside the stage list.
struct WindowPos {
  std::size_t stage = 0;
  std::size_t alt = 0;
};

struct CellPos {
  std::size_t stage = 0;
  std::size_t alt = 0;
  std::size_t index = 0;
};

inline std::optional<WindowPos> find_window(const Notebook& nb, const std::string& window_id) {
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto& alts = nb.stages[s].alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      if (alts[a].id == window_id) return WindowPos{s, a};
    }
  }
  return std::nullopt;
}

inline std::optional<CellPos> find_cell(const Notebook& nb, const std::string& cell_id) {
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto& alts = nb.stages[s].alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      const auto& cells = alts[a].cells;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].id == cell_id) return CellPos{s, a, i};
      }
    }
  }
  return std::nullopt;
}

inline WindowPos require_window(const Notebook& nb, const std::string& window_id) {
  auto pos = find_window(nb, window_id);
  if (!pos) throw NotebookError(NotebookErrorKind::UnknownWindow, window_id);
  return *pos;
}

inline CellPos require_cell(const Notebook& nb, const std::string& cell_id) {
  auto pos = find_cell(nb, cell_id);
  if (!pos) throw NotebookError(NotebookErrorKind::UnknownCell, cell_id);
  return *pos;
}

inline const Window& window_at(const Notebook& nb, WindowPos p) {
  return nb.stages[p.stage].alternatives[p.alt];
}

inline Window& window_at(Notebook& nb, WindowPos p) {
  return nb.stages[p.stage].alternatives[p.alt];
}

namespace detail {

inline void collect_ids(const Notebook& nb, std::vector<std::string>& out) {
  for (const auto& st : nb.stages) {
    out.push_back(st.id);
    for (const auto& w : st.alternatives) {
      out.push_back(w.id);
      for (const auto& c : w.cells) out.push_back(c.id);
    }
  }
}

// Numeric suffix of ids shaped like "<letter><digits>", else 0.
inline std::uint64_t serial_of(const std::string& id) {
  if (id.size() < 2) return 0;
  std::uint64_t v = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return 0;
    if (v > (UINT64_MAX - 9) / 10) return 0;
    v = v * 10 + static_cast<std::uint64_t>(id[i] - '0');
  }
  return v;
}

}  // namespace detail

inline std::vector<std::string> all_ids(const Notebook& nb) {
  std::vector<std::string> ids;
  detail::collect_ids(nb, ids);
  return ids;
}

// Raise next_serial above every generated-looking id already present.
inline void sync_serial(Notebook& nb) {
  std::uint64_t max_seen = 0;
  for (const auto& id : all_ids(nb)) max_seen = std::max(max_seen, detail::serial_of(id));
  nb.next_serial = std::max(nb.next_serial, max_seen + 1);
}

// Fresh id "<prefix><n>" not present in the notebook.
inline std::string fresh_id(Notebook& nb, char prefix) {
  const auto ids = all_ids(nb);
  const std::set<std::string> taken(ids.begin(), ids.end());
  for (;;) {
    std::string id = prefix + std::to_string(nb.next_serial++);
    if (!taken.count(id)) return id;
  }
}

// Checks the structural invariants; throws NotebookError on the first violation.
inline void check_invariants(const Notebook& nb) {
  std::set<std::string> seen;
  for (const auto& id : all_ids(nb)) {
    if (!seen.insert(id).second) throw NotebookError(NotebookErrorKind::DuplicateId, id);
  }
  for (const auto& st : nb.stages) {
    if (st.alternatives.empty()) throw NotebookError(NotebookErrorKind::EmptyStage, st.id);
  }
}

inline Notebook new_linear(const std::vector<std::vector<std::string>>& window_sources,
                           std::string title = {}) {
  Notebook nb;
  nb.title = std::move(title);
  for (const auto& sources : window_sources) {
    Stage st;
    st.id = fresh_id(nb, 's');
    Window w;
    w.id = fresh_id(nb, 'w');
    w.label = "Window " + std::to_string(nb.stages.size() + 1);
    for (const auto& src : sources) {
      // ids must be unique against the window being built too
      w.cells.push_back(Cell{"c" + std::to_string(nb.next_serial++), src});
    }
    st.alternatives.push_back(std::move(w));
    nb.stages.push_back(std::move(st));
  }
  return nb;
}

namespace detail {

inline std::string copy_label(const Stage& stage, const std::string& base_label) {
  std::set<std::string> labels;
  for (const auto& w : stage.alternatives) labels.insert(w.label);
  std::string candidate = base_label + " (copy)";
  for (int n = 2; labels.count(candidate); ++n) {
    candidate = base_label + " (copy " + std::to_string(n) + ")";
  }
  return candidate;
}

// Strip any " (copy)" / " (copy N)" suffix so copies of copies number from the root.
inline std::string root_label(const std::string& label) {
  auto pos = label.rfind(" (copy");
  if (pos == std::string::npos || label.back() != ')') return label;
  auto tail = label.substr(pos + 6, label.size() - pos - 7);
  if (!tail.empty() && (tail[0] != ' ' || tail.find_first_not_of("0123456789", 1) != std::string::npos)) {
    return label;
  }
  return label.substr(0, pos);
}

}  // namespace detail

// Appends a deep copy of the window (fresh ids, same sources) as a new
// alternative of its stage. Downstream stages are not copied.
inline std::pair<Notebook, std::string> branch(const Notebook& nb, const std::string& window_id) {
  const auto pos = require_window(nb, window_id);
  Notebook out = nb;
  Window copy = window_at(nb, pos);
  copy.id = fresh_id(out, 'w');
  for (auto& c : copy.cells) c.id = fresh_id(out, 'c');
  auto& stage = out.stages[pos.stage];
  copy.label = detail::copy_label(stage, detail::root_label(copy.label));
  std::string new_id = copy.id;
  stage.alternatives.push_back(std::move(copy));
  return {std::move(out), std::move(new_id)};
}

// Detaches the selected cells into a new single-window stage spliced in
// immediately after the source window's stage. The source window is kept even
// when emptied.
inline std::pair<Notebook, std::string> extract(const Notebook& nb, const std::string& source_window_id,
                                                const std::vector<std::string>& cell_ids) {
  const auto pos = require_window(nb, source_window_id);
  if (cell_ids.empty()) throw NotebookError(NotebookErrorKind::EmptySelection, source_window_id);
  const auto& src = window_at(nb, pos);
  std::set<std::string> wanted;
  for (const auto& id : cell_ids) {
    auto it = std::find_if(src.cells.begin(), src.cells.end(), [&](const Cell& c) { return c.id == id; });
    if (it == src.cells.end()) throw NotebookError(NotebookErrorKind::UnknownCell, id);
    wanted.insert(id);
  }

  Notebook out = nb;
  Window fresh;
  fresh.id = fresh_id(out, 'w');
  fresh.label = src.label + " (extract)";
  std::vector<Cell> kept;
  for (const auto& c : src.cells) {
    (wanted.count(c.id) ? fresh.cells : kept).push_back(c);
  }
  window_at(out, pos).cells = std::move(kept);

  Stage st;
  st.id = fresh_id(out, 's');
  std::string new_id = fresh.id;
  st.alternatives.push_back(std::move(fresh));
  out.stages.insert(out.stages.begin() + static_cast<std::ptrdiff_t>(pos.stage + 1), std::move(st));
  return {std::move(out), std::move(new_id)};
}

// Moves a cell to target_index of the target window. The index is interpreted
// after the cell has been removed from its current window.
inline Notebook relocate(const Notebook& nb, const std::string& cell_id, const std::string& target_window_id,
                         std::size_t target_index) {
  const auto from = require_cell(nb, cell_id);
  const auto to = require_window(nb, target_window_id);
  Notebook out = nb;
  auto& src_cells = out.stages[from.stage].alternatives[from.alt].cells;
  Cell moving = src_cells[from.index];
  src_cells.erase(src_cells.begin() + static_cast<std::ptrdiff_t>(from.index));
  auto& dst_cells = window_at(out, to).cells;
  if (target_index > dst_cells.size()) {
    throw NotebookError(NotebookErrorKind::IndexOutOfRange,
                        std::to_string(target_index) + " > " + std::to_string(dst_cells.size()));
  }
  dst_cells.insert(dst_cells.begin() + static_cast<std::ptrdiff_t>(target_index), std::move(moving));
  return out;
}

inline Notebook delete_cells(const Notebook& nb, const std::vector<std::string>& cell_ids) {
  for (const auto& id : cell_ids) require_cell(nb, id);
  const std::set<std::string> doomed(cell_ids.begin(), cell_ids.end());
  Notebook out = nb;
  for (auto& st : out.stages) {
    for (auto& w : st.alternatives) {
      std::erase_if(w.cells, [&](const Cell& c) { return doomed.count(c.id) > 0; });
    }
  }
  return out;
}

// Removes the window; a stage left without alternatives is removed as well.
inline Notebook delete_window(const Notebook& nb, const std::string& window_id) {
  const auto pos = require_window(nb, window_id);
  Notebook out = nb;
  auto& alts = out.stages[pos.stage].alternatives;
  alts.erase(alts.begin() + static_cast<std::ptrdiff_t>(pos.alt));
  if (alts.empty()) out.stages.erase(out.stages.begin() + static_cast<std::ptrdiff_t>(pos.stage));
  return out;
}

inline Notebook edit_cell(const Notebook& nb, const std::string& cell_id, std::string new_source) {
  const auto pos = require_cell(nb, cell_id);
  Notebook out = nb;
  out.stages[pos.stage].alternatives[pos.alt].cells[pos.index].source = std::move(new_source);
  return out;
}

inline std::size_t window_count(const Notebook& nb) {
  std::size_t n = 0;
  for (const auto& st : nb.stages) n += st.alternatives.size();
  return n;
}

}  // namespace branchnb
