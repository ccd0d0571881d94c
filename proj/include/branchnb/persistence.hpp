#pragma once

// .nbk.json notebook files, the flatten-to-linear transform, and results export.

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchnb/engine.hpp"
#include "branchnb/notebook.hpp"

namespace branchnb {

inline constexpr int kFormatVersion = 1;

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& what)
      : std::runtime_error("SchemaError at " + (path.empty() ? std::string("/") : path) + ": " + what),
        path_(std::move(path)) {}
  // JSON pointer to the offending key.
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class VersionError : public std::runtime_error {
 public:
  explicit VersionError(long long found)
      : std::runtime_error("VersionError: unsupported version " + std::to_string(found) + " (supported: " +
                           std::to_string(kFormatVersion) + ")"),
        found_(found) {}
  long long found() const { return found_; }

 private:
  long long found_;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline const ojson& require_key(const ojson& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing required key");
  return *it;
}

inline std::string require_string(const ojson& obj, const std::string& key, const std::string& path) {
  const auto& v = require_key(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

inline const ojson& require_array(const ojson& obj, const std::string& key, const std::string& path) {
  const auto& v = require_key(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "/" + key, "expected an array");
  return v;
}

inline void reject_unknown(const ojson& obj, std::initializer_list<const char*> known, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw SchemaError(path + "/" + it.key(), "unknown key");
    }
  }
}

}  // namespace detail

// Parses and validates a notebook document. Unknown top-level keys are kept
// verbatim; unknown keys anywhere else are rejected.
inline Notebook load(std::string_view bytes) {
  detail::ojson doc;
  try {
    doc = detail::ojson::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("", "expected an object");

  const auto& version = detail::require_key(doc, "version", "");
  if (!version.is_number_integer()) throw SchemaError("/version", "expected an integer");
  if (version.get<long long>() != kFormatVersion) throw VersionError(version.get<long long>());

  Notebook nb;
  nb.version = kFormatVersion;
  nb.title = detail::require_string(doc, "title", "");
  const auto& stages = detail::require_array(doc, "stages", "");

  std::set<std::string> seen;
  auto claim = [&](const std::string& id, const std::string& path) {
    if (id.empty()) throw SchemaError(path, "empty id");
    if (!seen.insert(id).second) throw SchemaError(path, "duplicate id " + id);
  };

  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sp = "/stages/" + std::to_string(s);
    const auto& js = stages[s];
    if (!js.is_object()) throw SchemaError(sp, "expected an object");
    detail::reject_unknown(js, {"id", "alternatives"}, sp);
    Stage st;
    st.id = detail::require_string(js, "id", sp);
    claim(st.id, sp + "/id");
    const auto& alts = detail::require_array(js, "alternatives", sp);
    if (alts.empty()) throw SchemaError(sp + "/alternatives", "a stage needs at least one alternative");
    for (std::size_t a = 0; a < alts.size(); ++a) {
      const std::string wp = sp + "/alternatives/" + std::to_string(a);
      const auto& jw = alts[a];
      if (!jw.is_object()) throw SchemaError(wp, "expected an object");
      detail::reject_unknown(jw, {"id", "label", "cells"}, wp);
      Window w;
      w.id = detail::require_string(jw, "id", wp);
      claim(w.id, wp + "/id");
      w.label = detail::require_string(jw, "label", wp);
      const auto& cells = detail::require_array(jw, "cells", wp);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::string cp = wp + "/cells/" + std::to_string(c);
        const auto& jc = cells[c];
        if (!jc.is_object()) throw SchemaError(cp, "expected an object");
        detail::reject_unknown(jc, {"id", "source"}, cp);
        Cell cell;
        cell.id = detail::require_string(jc, "id", cp);
        claim(cell.id, cp + "/id");
        cell.source = detail::require_string(jc, "source", cp);
        w.cells.push_back(std::move(cell));
      }
      st.alternatives.push_back(std::move(w));
    }
    nb.stages.push_back(std::move(st));
  }

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == "version" || it.key() == "title" || it.key() == "stages") continue;
    nb.extra.emplace(it.key(), it.value().dump());
  }
  sync_serial(nb);
  return nb;
}

// Deterministic bytes: fixed key order, two-space indent, trailing newline.
inline std::string save(const Notebook& nb) {
  detail::ojson doc;
  doc["version"] = nb.version;
  doc["title"] = nb.title;
  auto& stages = doc["stages"] = detail::ojson::array();
  for (const auto& st : nb.stages) {
    detail::ojson js;
    js["id"] = st.id;
    auto& alts = js["alternatives"] = detail::ojson::array();
    for (const auto& w : st.alternatives) {
      detail::ojson jw;
      jw["id"] = w.id;
      jw["label"] = w.label;
      auto& cells = jw["cells"] = detail::ojson::array();
      for (const auto& c : w.cells) {
        detail::ojson jc;
        jc["id"] = c.id;
        jc["source"] = c.source;
        cells.push_back(std::move(jc));
      }
      alts.push_back(std::move(jw));
    }
    stages.push_back(std::move(js));
  }
  for (const auto& [key, raw] : nb.extra) doc[key] = detail::ojson::parse(raw);
  return doc.dump(2) + "\n";
}

// One linear notebook per full combination, in canonical order. Ids are kept
// so results line up with the branched notebook window for window.
inline std::vector<std::pair<Combination, Notebook>> flatten(const Notebook& nb) {
  std::vector<std::pair<Combination, Notebook>> out;
  for (auto& c : upstream_combinations(nb, nb.stages.size())) {
    Notebook linear = nb;
    for (std::size_t s = 0; s < linear.stages.size(); ++s) {
      auto& alts = linear.stages[s].alternatives;
      Window chosen = alts[c.choice_at(s).value_or(0)];
      alts.assign(1, std::move(chosen));
    }
    out.emplace_back(std::move(c), std::move(linear));
  }
  return out;
}

struct ResultRow {
  std::size_t stage_index = 0;
  std::string window_id;
  std::string window_label;
  std::string combination;
  std::size_t output_index = 0;
  std::string kind;  // ok | error | skipped
  std::string text;
};

// Rows ordered by stage, then combination (canonical order), then alternative,
// then output index.
inline std::vector<ResultRow> results_table(const Notebook& nb, const ExecState& state) {
  std::vector<ResultRow> rows;
  const auto view = outputs(nb, state);
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto& alts = nb.stages[s].alternatives;
    std::vector<std::tuple<Combination, std::size_t, const OutputEntry*>> order;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      for (const auto& e : view.at(alts[a].id)) order.emplace_back(e.combination, a, &e);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return std::tie(std::get<0>(x), std::get<1>(x)) < std::tie(std::get<0>(y), std::get<1>(y));
    });
    for (const auto& [combo, a, entry] : order) {
      ResultRow base{s, alts[a].id, alts[a].label, combo.label(), 0, "ok", {}};
      for (std::size_t i = 0; i < entry->items.size(); ++i) {
        ResultRow r = base;
        r.output_index = i;
        r.text = entry->items[i];
        rows.push_back(std::move(r));
      }
      if (entry->error) {
        ResultRow r = base;
        r.output_index = entry->items.size();
        r.kind = entry->upstream_failure ? "skipped" : "error";
        r.text = entry->upstream_failure ? std::string() : entry->error->describe();
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

enum class ResultsFormat { Csv, Json };

inline std::string export_results(const Notebook& nb, const ExecState& state, ResultsFormat format) {
  const auto rows = results_table(nb, state);
  if (format == ResultsFormat::Csv) {
    std::string out = "stage_index,window_id,window_label,combination,output_index,kind,text\r\n";
    for (const auto& r : rows) {
      out += std::to_string(r.stage_index) + ',' + detail::csv_field(r.window_id) + ',' +
             detail::csv_field(r.window_label) + ',' + detail::csv_field(r.combination) + ',' +
             std::to_string(r.output_index) + ',' + r.kind + ',' + detail::csv_field(r.text) + "\r\n";
    }
    return out;
  }
  auto arr = detail::ojson::array();
  for (const auto& r : rows) {
    detail::ojson j;
    j["stage_index"] = r.stage_index;
    j["window_id"] = r.window_id;
    j["window_label"] = r.window_label;
    j["combination"] = r.combination;
    j["output_index"] = r.output_index;
    j["kind"] = r.kind;
    j["text"] = r.text;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace branchnb
