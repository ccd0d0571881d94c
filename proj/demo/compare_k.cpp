// Branch one step of a notebook, run every combination, print each result.
#include <iostream>

#include "branchnb/engine.hpp"
#include "branchnb/notebook.hpp"

using namespace branchnb;

int main() {
  Notebook nb = new_linear({
      {"xs = [3, 1, 4, 1, 5, 9, 2, 6]", "target = 4"},
      {"k = 1"},
      {"near = sort(xs)", "show(near[k])"},
  }, "compare k");

  // two more alternatives for the "k" step
  const std::string k_window = nb.stages[1].alternatives[0].id;
  for (const char* src : {"k = 3", "k = 5"}) {
    auto [next, id] = branch(nb, k_window);
    nb = edit_cell(next, window_at(next, require_window(next, id)).cells[0].id, src);
  }

  const ExecState state = execute_all(nb);
  const std::string last = nb.stages[2].alternatives[0].id;
  const OutputsView view = outputs(nb, state);
  for (const auto& entry : view.at(last)) {
    std::cout << entry.combination.label() << " -> ";
    for (const auto& item : entry.items) std::cout << item << ' ';
    std::cout << '\n';
  }
}
