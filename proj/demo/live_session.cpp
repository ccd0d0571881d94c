// Drive a session through commands and follow the delta stream it publishes.
#include <iostream>

#include "branchnb/service.hpp"

using namespace branchnb;
using service::json;

int main() {
  service::Session session("demo", new_linear({{"n = 10"}, {"total = n * (n + 1) / 2"}, {"show(total)"}}));
  const Notebook nb = session.notebook();

  json base = session.snapshot();
  session.apply_command({{"op", "execute_all"}, {"client_seq", 1}});
  session.drain();
  session.apply_command({{"op", "edit_cell"}, {"client_seq", 2}, {"cell_id", nb.stages[0].alternatives[0].cells[0].id},
                         {"source", "n = 100"}});
  session.apply_command({{"op", "run_from"}, {"client_seq", 3}, {"cell_id", nb.stages[0].alternatives[0].cells[0].id}});
  session.drain();

  for (const auto& d : session.deltas_since(0)) {
    std::cout << d["server_seq"] << ' ' << d["change"].get<std::string>();
    if (d["change"] == "status_changed") std::cout << ' ' << d["cell_id"].get<std::string>() << ' ' << d["status"].get<std::string>();
    std::cout << '\n';
    service::apply_delta(base, d);
  }
  base["notebook_id"] = "demo";
  std::cout << (base == session.snapshot() ? "replayed snapshot matches" : "replay MISMATCH") << '\n';
  std::cout << session.results(ResultsFormat::Csv);
}
