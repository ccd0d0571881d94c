// branchnb: headless driver for branched notebooks.
//
// Exit codes: 0 success, 1 oracle divergence, 2 input/schema error, 3 internal error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "branchnb/http.hpp"
#include "branchnb/layout.hpp"
#include "branchnb/oracle.hpp"
#include "branchnb/persistence.hpp"
#include "branchnb/service.hpp"
#include "branchnb/telemetry.hpp"

namespace fs = std::filesystem;
using namespace branchnb;

namespace {

constexpr int kOk = 0;
constexpr int kDiverged = 1;
constexpr int kInputError = 2;
constexpr int kInternal = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << bytes;
}

Notebook load_checked(const std::string& path) {
  Notebook nb = load(read_file(path));
  check_invariants(nb);
  return nb;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_run(const std::string& file, const std::string& out, const std::string& format) {
  const Notebook nb = load_checked(file);
  const auto bytes = export_results(nb, execute_all(nb), format == "json" ? ResultsFormat::Json : ResultsFormat::Csv);
  if (out.empty()) std::cout << bytes;
  else write_file(out, bytes);
  return kOk;
}

int cmd_flatten(const std::string& file, const std::string& outdir) {
  const Notebook nb = load_checked(file);
  fs::create_directories(outdir);
  for (const auto& [combo, linear] : flatten(nb)) {
    const auto label = combo.label();
    const auto name = (label.empty() ? std::string("linear") : label) + ".nbk.json";
    write_file(fs::path(outdir) / name, save(linear));
    std::cout << name << "\n";
  }
  return kOk;
}

int cmd_oracle(const std::string& file, const std::string& expect) {
  const Notebook nb = load_checked(file);
  const ExecState state = execute_all(nb);
  if (auto d = first_divergence(branched_transcripts(nb, state), flattened_transcripts(nb))) {
    std::cout << "DIVERGENCE combination=" << (d->combination.empty() ? "linear" : d->combination)
              << " window=" << d->window_id << "\n--- branched\n"
              << d->branched << "--- flattened\n"
              << d->flattened;
    return kDiverged;
  }
  if (!expect.empty()) {
    const std::string want = read_file(expect);
    const std::string got = export_results(nb, state, ResultsFormat::Csv);
    if (want != got) {
      std::size_t line = 1;
      std::size_t i = 0;
      for (; i < want.size() && i < got.size() && want[i] == got[i]; ++i) {
        if (want[i] == '\n') ++line;
      }
      std::cout << "DIVERGENCE results line " << line << " differs from " << expect << "\n";
      return kDiverged;
    }
  }
  std::cout << "OK " << upstream_combinations(nb, nb.stages.size()).size() << " combinations\n";
  return kOk;
}

int cmd_layout(const std::string& file, const std::string& mode, const layout::LayoutConfig& cfg,
               const std::string& strategy, double spacing) {
  const Notebook nb = load_checked(file);
  if (mode == "desktop") {
    const auto rects = layout::desktop_layout(nb);
    std::cout << "stage,alternative,window_id,column,x,y,width,height\n";
    for (std::size_t s = 0; s < nb.stages.size(); ++s) {
      for (std::size_t a = 0; a < nb.stages[s].alternatives.size(); ++a) {
        const auto& id = nb.stages[s].alternatives[a].id;
        const auto& r = rects.at(id);
        std::cout << s << ',' << a << ',' << id << ',' << r.column << ',' << r.x << ',' << r.y << ',' << r.width
                  << ',' << r.height << "\n";
      }
    }
    return kOk;
  }
  const auto strat = layout::parse_strategy(strategy);
  const auto poses = layout::semicircle(cfg, nb.stages.size());
  std::cout << "stage,alternative,window_id,x,y,z,yaw\n";
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const auto& alts = nb.stages[s].alternatives;
    const auto placed = layout::branch_poses(strat, poses[s], alts.size(), spacing, cfg);
    for (std::size_t a = 0; a < alts.size(); ++a) {
      const auto& p = placed[a];
      std::cout << s << ',' << a << ',' << alts[a].id << ',' << fmt(p.x) << ',' << fmt(p.y) << ',' << fmt(p.z) << ','
                << fmt(p.yaw) << "\n";
    }
  }
  return kOk;
}

int cmd_metrics(const std::string& file, std::size_t task) {
  const auto log = telemetry::load_log(read_file(file));
  std::cout << telemetry::to_json(telemetry::compute_metrics(log.events(), task)).dump(2) << "\n";
  return kOk;
}

int cmd_validate(const std::string& file) {
  const Notebook nb = load_checked(file);
  std::cout << "OK " << nb.stages.size() << " stages, " << window_count(nb) << " windows, "
            << upstream_combinations(nb, nb.stages.size()).size() << " combinations\n";
  return kOk;
}

service::HttpServer* g_server = nullptr;

int cmd_serve(const std::string& file, const std::string& host, int port, const std::string& id,
              const std::string& telemetry_log) {
  Notebook nb = load_checked(file);
  service::Service svc;
  svc.open(id, std::move(nb), telemetry_log);
  service::HttpServer server(svc);
  const int bound = server.bind(host, port);
  if (bound < 0) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return kInputError;
  }
  std::cout << "serving /nb/" << id << " on http://" << host << ":" << bound << "\n" << std::flush;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branched notebook driver"};
  app.require_subcommand(1);

  std::string file;
  std::string out;
  std::string format = "csv";
  auto* run = app.add_subcommand("run", "Execute every combination and export the results table");
  run->add_option("file", file, "Notebook (.nbk.json)")->required();
  run->add_option("--out", out, "Write results here instead of stdout");
  run->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  std::string outdir;
  auto* flat = app.add_subcommand("flatten", "Write one linear notebook per combination");
  flat->add_option("file", file, "Notebook (.nbk.json)")->required();
  flat->add_option("--outdir", outdir, "Output directory")->required();

  std::string expect;
  auto* orc = app.add_subcommand("oracle", "Compare branched execution with every flattened notebook");
  orc->add_option("file", file, "Notebook (.nbk.json)")->required();
  orc->add_option("--expect", expect, "Also require the results CSV to equal this recorded export");

  std::string mode = "semicircle";
  layout::LayoutConfig cfg;
  std::string strategy = "orthogonal";
  double spacing = 0.4;
  auto* lay = app.add_subcommand("layout", "Print window poses (semicircle, metres) or rectangles (desktop, px) as CSV");
  lay->add_option("file", file, "Notebook (.nbk.json)")->required();
  lay->add_option("--mode", mode, "semicircle or desktop")->check(CLI::IsMember({"semicircle", "desktop"}));
  lay->add_option("--radius", cfg.radius, "Arc radius (m)")->capture_default_str();
  lay->add_option("--width", cfg.window_width, "Window width (m)")->capture_default_str();
  lay->add_option("--height", cfg.window_height, "Window height (m)")->capture_default_str();
  lay->add_option("--gap", cfg.gap, "Arc gap between windows (m)")->capture_default_str();
  lay->add_option("--strategy", strategy, "Placement of branch alternatives: orthogonal, grid or column")
      ->capture_default_str();
  lay->add_option("--spacing", spacing, "Distance between alternatives (m)")->capture_default_str();
  lay->add_flag("--allow-overflow", cfg.allow_overflow, "Place windows past the maximum span instead of failing");

  std::size_t task = 0;
  auto* met = app.add_subcommand("metrics", "Compute task measures from an interaction log");
  met->add_option("log", file, "Interaction log (.log.jsonl)")->required();
  met->add_option("--task", task, "Task index, 0-based")->required();

  auto* val = app.add_subcommand("validate", "Check schema and structural invariants");
  val->add_option("file", file, "Notebook (.nbk.json)")->required();

  int port = 8080;
  std::string host = "127.0.0.1";
  std::string id = "main";
  std::string telemetry_log;
  auto* srv = app.add_subcommand("serve", "Serve the notebook over HTTP");
  srv->add_option("file", file, "Notebook (.nbk.json)")->required();
  srv->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  srv->add_option("--host", host, "Bind address")->capture_default_str();
  srv->add_option("--id", id, "Notebook id in URLs")->capture_default_str();
  srv->add_option("--telemetry-log", telemetry_log, "Append ingested telemetry to this .log.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*run) return cmd_run(file, out, format);
    if (*flat) return cmd_flatten(file, outdir);
    if (*orc) return cmd_oracle(file, expect);
    if (*lay) return cmd_layout(file, mode, cfg, strategy, spacing);
    if (*met) return cmd_metrics(file, task);
    if (*val) return cmd_validate(file);
    if (*srv) return cmd_serve(file, host, port, id, telemetry_log);
  } catch (const InputError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const VersionError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const NotebookError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const layout::LayoutError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const telemetry::TelemetryError& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
