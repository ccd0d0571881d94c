#include <gtest/gtest.h>

#include <map>
#include <string>
#include <vector>

#include "branchnb/engine.hpp"
#include "branchnb/notebook.hpp"
#include "support/properties.hpp"

using namespace branchnb;

namespace {

const Window& win(const Notebook& nb, std::size_t s, std::size_t a = 0) { return nb.stages.at(s).alternatives.at(a); }

// stages: ["x=1"] / group{["x=x+1"], [second]} / ["show(x)"]
Notebook two_way(const std::string& second = "x=x*10") {
  auto nb = new_linear({{"x=1"}, {"x=x+1"}, {"show(x)"}});
  auto [g, id] = branch(nb, win(nb, 1).id);
  return edit_cell(g, win(g, 1, 1).cells[0].id, second);
}

Notebook groups(const std::vector<std::size_t>& sizes, std::size_t stages) {
  std::vector<std::vector<std::string>> src(stages, std::vector<std::string>{"v = 1"});
  Notebook nb = new_linear(src);
  for (const auto& [stage, k] : std::map<std::size_t, std::size_t>{{2, sizes[0]}, {5, sizes[1]}}) {
    for (std::size_t i = 1; i < k; ++i) nb = branch(nb, win(nb, stage).id).first;
  }
  return nb;
}

}  // namespace

TEST(Combinations, CountsAndOrder) {
  auto nb = groups({3, 2}, 8);
  auto combos = upstream_combinations(nb, 7);
  ASSERT_EQ(combos.size(), 6u);
  std::vector<std::string> labels;
  for (const auto& c : combos) labels.push_back(c.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"s2=0;s5=0", "s2=0;s5=1", "s2=1;s5=0", "s2=1;s5=1", "s2=2;s5=0",
                                              "s2=2;s5=1"}));
  for (std::size_t i = 0; i < combos.size(); ++i) EXPECT_EQ(combination_ordinal(nb, combos[i], 7), i);
  EXPECT_EQ(upstream_combinations(nb, 2).size(), 1u);
  EXPECT_EQ(upstream_combinations(nb, 3).size(), 3u);
  EXPECT_EQ(upstream_combinations(groups({2, 2}, 7), 6).size(), 4u);
  auto linear = new_linear({{"a"}, {"b"}});
  ASSERT_EQ(upstream_combinations(linear, 2).size(), 1u);
  EXPECT_EQ(upstream_combinations(linear, 2)[0].label(), "");
}

TEST(Execute, TwoWayGroupGivesTwoEntries) {
  auto nb = two_way();
  const auto state = execute_all(nb);
  const auto entries = outputs(nb, state).at(win(nb, 2).id);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].combination.label(), "s1=0");
  EXPECT_EQ(entries[0].items, std::vector<std::string>{"2"});
  EXPECT_EQ(entries[1].combination.label(), "s1=1");
  EXPECT_EQ(entries[1].items, std::vector<std::string>{"10"});
}

TEST(Execute, ErrorInOneAlternativeSkipsOnlyItsLineage) {
  auto nb = two_way("error(\"boom\")");
  const auto state = execute_all(nb);
  const auto entries = outputs(nb, state).at(win(nb, 2).id);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].items, std::vector<std::string>{"2"});
  EXPECT_FALSE(entries[0].error);
  EXPECT_TRUE(entries[1].items.empty());
  ASSERT_TRUE(entries[1].error);
  EXPECT_EQ(entries[1].error->kind, minilang::ErrorKind::UserError);
  EXPECT_TRUE(entries[1].upstream_failure);
  const auto st = statuses(nb, state);
  const auto& show = win(nb, 2).cells[0].id;
  EXPECT_EQ(st.at({show, "s1=1"}), ExecStatus::Skipped);
  EXPECT_EQ(st.at({show, "s1=0"}), ExecStatus::Ok);
  EXPECT_EQ(st.at({win(nb, 1, 1).cells[0].id, ""}), ExecStatus::Error);
}

TEST(Execute, LinearErrorHaltsEverythingAfter) {
  std::vector<std::vector<std::string>> src;
  for (int i = 0; i < 10; ++i) src.push_back({"w" + std::to_string(i) + " = " + std::to_string(i), "1"});
  src[3] = {"boom = 1 / 0", "2"};
  auto nb = new_linear(src);
  const auto state = execute_all(nb);
  const auto st = statuses(nb, state);
  for (std::size_t s = 0; s < 10; ++s) {
    for (std::size_t i = 0; i < 2; ++i) {
      const auto got = st.at({win(nb, s).cells[i].id, ""});
      if (s < 3) EXPECT_EQ(got, ExecStatus::Ok);
      else if (s == 3 && i == 0) EXPECT_EQ(got, ExecStatus::Error);
      else EXPECT_EQ(got, ExecStatus::Skipped);
    }
  }
}

TEST(Execute, EmptyWindowsAndNotebook) {
  auto nb = new_linear({{"x = 2"}, {}, {"x"}});
  const auto state = execute_all(nb);
  EXPECT_EQ(outputs(nb, state).at(win(nb, 2).id)[0].items, std::vector<std::string>{"2"});
  EXPECT_TRUE(outputs(nb, state).at(win(nb, 1).id)[0].items.empty());
  auto empty = new_linear({});
  EXPECT_TRUE(outputs(empty, execute_all(empty)).empty());
}

TEST(Execute, StatusesIdleBeforeRun) {
  auto nb = two_way();
  ExecState none;
  for (const auto& [key, st] : statuses(nb, none)) EXPECT_EQ(st, ExecStatus::Idle);
  EXPECT_EQ(statuses(nb, none).size(), 1u + 2u + 2u);
}

TEST(Execute, HooksFireInCanonicalOrder) {
  auto nb = groups({3, 2}, 7);
  std::vector<std::string> seen;
  ExecHooks hooks;
  hooks.on_output = [&](const std::string&, std::size_t stage, const OutputEntry& e) {
    if (stage == 6) seen.push_back(e.combination.label());
  };
  execute_all(nb, hooks);
  std::vector<std::string> want;
  for (const auto& c : upstream_combinations(nb, 6)) want.push_back(c.label());
  EXPECT_EQ(seen, want);
}

TEST(Execute, NewBranchIsIdleUntilRun) {
  auto nb = two_way();
  auto state = execute_all(nb);
  auto [b, id] = branch(nb, win(nb, 1).id);
  prune(state, b);
  const auto st = statuses(b, state);
  EXPECT_EQ(st.at({win(b, 1, 2).cells[0].id, ""}), ExecStatus::Idle);
  EXPECT_EQ(st.at({win(b, 2).cells[0].id, "s1=2"}), ExecStatus::Idle);
  EXPECT_EQ(st.at({win(b, 2).cells[0].id, "s1=0"}), ExecStatus::Ok);
  EXPECT_EQ(outputs(b, state).at(win(b, 2).id).size(), 2u);
}

TEST(Invalidate, MarksSuffixStaleOnly) {
  auto nb = new_linear({{"a = 1"}, {"b = a + 1", "b"}, {"b * 2"}});
  auto state = execute_all(nb);
  auto edited = edit_cell(nb, win(nb, 1).cells[1].id, "b + 100");
  state = invalidate(state, edited, win(nb, 1).cells[1].id);
  const auto st = statuses(edited, state);
  EXPECT_EQ(st.at({win(nb, 0).cells[0].id, ""}), ExecStatus::Ok);
  EXPECT_EQ(st.at({win(nb, 1).cells[0].id, ""}), ExecStatus::Ok);
  EXPECT_EQ(st.at({win(nb, 1).cells[1].id, ""}), ExecStatus::Stale);
  EXPECT_EQ(st.at({win(nb, 2).cells[0].id, ""}), ExecStatus::Stale);
  EXPECT_TRUE(outputs(edited, state).at(win(nb, 2).id)[0].stale);
  EXPECT_EQ(outputs(edited, state).at(win(nb, 2).id)[0].items, std::vector<std::string>{"4"});

  state = run_from(edited, state, win(nb, 1).cells[1].id);
  for (const auto& [key, s] : statuses(edited, state)) EXPECT_EQ(s, ExecStatus::Ok);
  EXPECT_EQ(outputs(edited, state).at(win(nb, 1).id)[0].items, std::vector<std::string>{"102"});
}

TEST(Invalidate, InsideAlternativeLeavesSiblingLineagesOk) {
  auto nb = two_way();
  auto state = execute_all(nb);
  const auto cell = win(nb, 1, 0).cells[0].id;
  auto edited = edit_cell(nb, cell, "x = x + 5");
  state = invalidate(state, edited, cell);
  const auto st = statuses(edited, state);
  const auto& show = win(nb, 2).cells[0].id;
  EXPECT_EQ(st.at({show, "s1=0"}), ExecStatus::Stale);
  EXPECT_EQ(st.at({show, "s1=1"}), ExecStatus::Ok);
  EXPECT_EQ(st.at({win(nb, 1, 1).cells[0].id, ""}), ExecStatus::Ok);
}

TEST(RunFrom, OnlyRecomputesSuffixAndMatchesBatch) {
  Notebook nb = groups({3, 2}, 8);
  nb = edit_cell(nb, win(nb, 7).cells[0].id, "v + 1");
  auto state = execute_all(nb);
  const auto before = outputs(nb, state);
  auto edited = edit_cell(nb, win(nb, 7).cells[0].id, "v + 2");
  state = invalidate(state, edited, win(nb, 7).cells[0].id);

  std::map<std::string, int> evaluations;
  ExecHooks hooks;
  hooks.on_evaluate = [&](const std::string& c) { ++evaluations[c]; };
  state = run_from(edited, state, win(nb, 7).cells[0].id, hooks);
  EXPECT_EQ(evaluations.size(), 1u);
  EXPECT_EQ(evaluations[win(nb, 7).cells[0].id], 6);
  const auto after = outputs(edited, state);
  for (std::size_t s = 0; s < 7; ++s) {
    for (const auto& w : edited.stages[s].alternatives) EXPECT_EQ(after.at(w.id), before.at(w.id));
  }
  EXPECT_EQ(after.at(win(nb, 7).id).size(), 6u);
  EXPECT_EQ(check::observable(edited, state), check::observable(edited, execute_all(edited)));
}

TEST(RunFrom, FirstCellEqualsExecuteAll) {
  auto nb = two_way();
  const auto a = run_from(nb, execute_all(nb), win(nb, 0).cells[0].id);
  EXPECT_EQ(check::observable(nb, a), check::observable(nb, execute_all(nb)));
}

TEST(RunFrom, WithoutCheckpointsFallsBackToFullRun) {
  auto nb = two_way();
  const auto state = run_from(nb, ExecState{}, win(nb, 2).cells[0].id);
  EXPECT_EQ(check::observable(nb, state), check::observable(nb, execute_all(nb)));
}

TEST(RunFrom, InsideAlternativeLeavesSiblingUntouched) {
  auto nb = two_way();
  auto state = execute_all(nb);
  const auto cell = win(nb, 1, 1).cells[0].id;
  auto edited = edit_cell(nb, cell, "x = x * 100");
  state = invalidate(state, edited, cell);
  std::map<std::string, int> evaluations;
  ExecHooks hooks;
  hooks.on_evaluate = [&](const std::string& c) { ++evaluations[c]; };
  state = run_from(edited, state, cell, hooks);
  EXPECT_EQ(evaluations.count(win(nb, 1, 0).cells[0].id), 0u);
  EXPECT_EQ(evaluations[win(nb, 2).cells[0].id], 1);
  const auto entries = outputs(edited, state).at(win(nb, 2).id);
  EXPECT_EQ(entries[0].items, std::vector<std::string>{"2"});
  EXPECT_EQ(entries[1].items, std::vector<std::string>{"100"});
}

TEST(RunFrom, MiddleCellDoesNotRerunEarlierCells) {
  auto nb = new_linear({{"a = 1", "b = a + 1", "c = b + 1", "c"}});
  auto state = execute_all(nb);
  std::map<std::string, int> evaluations;
  ExecHooks hooks;
  hooks.on_evaluate = [&](const std::string& c) { ++evaluations[c]; };
  state = run_from(nb, state, win(nb, 0).cells[2].id, hooks);
  EXPECT_EQ(evaluations.size(), 2u);
  EXPECT_EQ(evaluations.count(win(nb, 0).cells[0].id), 0u);
}

TEST(RunFrom, UnknownCell) {
  auto nb = two_way();
  EXPECT_THROW(run_from(nb, ExecState{}, "nope"), NotebookError);
}

TEST(Prune, StructuralEditsKeepUnaffectedResults) {
  auto nb = two_way();
  auto state = execute_all(nb);
  auto removed = delete_window(nb, win(nb, 1, 1).id);
  prune(state, removed);
  const auto entries = outputs(removed, state).at(win(removed, 2).id);
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].items, std::vector<std::string>{"2"});
  EXPECT_FALSE(entries[0].stale);
}

TEST(PlannedSlots, MatchesWhatRunsEvaluate) {
  check::ProgramGen gen(41);
  for (int i = 0; i < 30; ++i) {
    auto nb = check::random_notebook(gen);
    auto state = execute_all(nb);
    const auto cells = check::cell_ids(nb);
    const auto& cell = cells[static_cast<std::size_t>(gen.pick(0, static_cast<int>(cells.size()) - 1))];
    std::vector<std::pair<std::string, std::string>> visited;
    ExecHooks hooks;
    hooks.on_status = [&](const std::string& c, const Combination& combo, ExecStatus s) {
      if (s != ExecStatus::Running) visited.emplace_back(c, combo.label());
    };
    const auto planned = planned_slots(nb, state, cell);
    run_from(nb, state, cell, hooks);
    ASSERT_EQ(planned.size(), visited.size());
    for (std::size_t j = 0; j < planned.size(); ++j) {
      EXPECT_EQ(planned[j].first, visited[j].first);
      EXPECT_EQ(planned[j].second.label(), visited[j].second);
    }
  }
}

// ---- property suites (smaller than the acceptance runs) ------------------

TEST(EngineProperties, FlattenOracleHaltingCountsAndLaws) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    check::ProgramGen gen(seed);
    const auto nb = check::random_notebook(gen);
    const auto state = execute_all(nb);
    if (auto f = check::check_flatten(nb)) ADD_FAILURE() << "seed " << seed << ": " << *f;
    if (auto f = check::check_halting(nb, state)) ADD_FAILURE() << "seed " << seed << ": " << *f;
    if (auto f = check::check_result_counts(nb, state)) ADD_FAILURE() << "seed " << seed << ": " << *f;
    if (auto f = check::check_execution_count(nb)) ADD_FAILURE() << "seed " << seed << ": " << *f;
  }
}

TEST(EngineProperties, ExecutionCountWithoutErrorsIsProductOfGroups) {
  auto nb = groups({3, 2}, 8);
  std::map<std::string, std::size_t> n;
  ExecHooks hooks;
  hooks.on_evaluate = [&](const std::string& c) { ++n[c]; };
  execute_all(nb, hooks);
  for (std::size_t s = 0; s < nb.stages.size(); ++s) {
    const std::size_t want = s <= 2 ? 1 : s <= 5 ? 3 : 6;
    for (const auto& w : nb.stages[s].alternatives) EXPECT_EQ(n[w.cells[0].id], want) << "stage " << s;
  }
}

TEST(EngineProperties, Isolation) {
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto ic = check::make_isolation_case(500 + i);
    if (auto f = check::check_isolation_case(ic)) ADD_FAILURE() << "case " << i << ": " << *f;
  }
}

TEST(EngineProperties, IncrementalEqualsBatch) {
  for (std::uint64_t i = 0; i < 30; ++i) {
    if (auto f = check::check_incremental_case(300 + i)) ADD_FAILURE() << "case " << i << ": " << *f;
  }
}
