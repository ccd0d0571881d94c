#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "branchnb/persistence.hpp"
#include "support/generators.hpp"

using namespace branchnb;

#ifndef BRANCHNB_FIXTURES
#error "BRANCHNB_FIXTURES must point at the fixtures directory"
#endif

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string schema_path(const std::string& doc) {
  try {
    load(doc);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Format, FixturesRoundTripByteForByte) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(BRANCHNB_FIXTURES)) {
    if (!e.path().string().ends_with(".nbk.json")) continue;
    const auto bytes = read_file(e.path());
    const auto nb = load(bytes);
    EXPECT_EQ(save(nb), bytes) << e.path();
    EXPECT_EQ(load(save(nb)), nb);
    ++n;
  }
  EXPECT_GE(n, 5);
}

TEST(Format, RandomNotebooksRoundTrip) {
  check::ProgramGen gen(8);
  for (int i = 0; i < 100; ++i) {
    auto nb = check::random_notebook(gen);
    nb.title = "tést \"" + std::to_string(i) + "\"\n";
    const auto bytes = save(nb);
    EXPECT_EQ(load(bytes), nb);
    EXPECT_EQ(save(load(bytes)), bytes);
  }
}

TEST(Format, SaveIsInjectiveOnSmallEdits) {
  auto nb = new_linear({{"a"}, {"b"}});
  EXPECT_NE(save(nb), save(edit_cell(nb, nb.stages[0].alternatives[0].cells[0].id, "a ")));
  auto retitled = nb;
  retitled.title = "x";
  EXPECT_NE(save(nb), save(retitled));
}

TEST(Format, KeyOrderAndShape) {
  auto nb = new_linear({{"x = 1"}}, "T");
  EXPECT_EQ(save(nb),
            "{\n"
            "  \"version\": 1,\n"
            "  \"title\": \"T\",\n"
            "  \"stages\": [\n"
            "    {\n"
            "      \"id\": \"s1\",\n"
            "      \"alternatives\": [\n"
            "        {\n"
            "          \"id\": \"w2\",\n"
            "          \"label\": \"Window 1\",\n"
            "          \"cells\": [\n"
            "            {\n"
            "              \"id\": \"c3\",\n"
            "              \"source\": \"x = 1\"\n"
            "            }\n"
            "          ]\n"
            "        }\n"
            "      ]\n"
            "    }\n"
            "  ]\n"
            "}\n");
}

TEST(Format, UnknownTopLevelKeysSurvive) {
  const std::string doc = R"({"version":1,"title":"t","stages":[],"zeta":[1,2],"alpha":{"k":"v"}})";
  const auto nb = load(doc);
  EXPECT_EQ(nb.extra.size(), 2u);
  const auto out = save(nb);
  EXPECT_NE(out.find("\"alpha\": {\n    \"k\": \"v\"\n  }"), std::string::npos);
  EXPECT_LT(out.find("\"stages\""), out.find("\"alpha\""));
  EXPECT_LT(out.find("\"alpha\""), out.find("\"zeta\""));
  EXPECT_EQ(load(out), nb);
}

TEST(Format, SchemaErrorsCarryPaths) {
  EXPECT_EQ(schema_path(R"({"version":1,"title":"t"})"), "/stages");
  EXPECT_EQ(schema_path(R"({"version":1,"stages":[]})"), "/title");
  EXPECT_EQ(schema_path(R"({"version":1,"title":3,"stages":[]})"), "/title");
  EXPECT_EQ(schema_path(R"({"version":1,"title":"t","stages":[{"id":"s1","alternatives":[]}]})"),
            "/stages/0/alternatives");
  EXPECT_EQ(schema_path(
                R"({"version":1,"title":"t","stages":[{"id":"s1","alternatives":[{"id":"w1","label":"","cells":[{"id":"c1"}]}]}]})"),
            "/stages/0/alternatives/0/cells/0/source");
  EXPECT_EQ(schema_path(
                R"({"version":1,"title":"t","stages":[{"id":"s1","alternatives":[{"id":"s1","label":"","cells":[]}]}]})"),
            "/stages/0/alternatives/0/id");
  EXPECT_EQ(schema_path(R"({"version":1,"title":"t","stages":[{"id":"s1","extra":1,"alternatives":[]}]})"),
            "/stages/0/extra");
  EXPECT_EQ(schema_path("not json"), "");
  EXPECT_EQ(schema_path("[]"), "");
}

TEST(Format, VersionError) {
  try {
    load(R"({"version":2,"title":"t","stages":[]})");
    FAIL();
  } catch (const VersionError& e) {
    EXPECT_EQ(e.found(), 2);
    EXPECT_NE(std::string(e.what()).find("supported: 1"), std::string::npos);
  }
}

TEST(Flatten, LinearIsItself) {
  auto nb = new_linear({{"a"}, {"b"}});
  const auto flat = flatten(nb);
  ASSERT_EQ(flat.size(), 1u);
  EXPECT_EQ(flat[0].first.label(), "");
  EXPECT_EQ(flat[0].second, nb);
}

TEST(Flatten, GroupsExpandInCanonicalOrderKeepingIds) {
  auto nb = new_linear({{"a"}, {"b"}, {"c"}, {"d"}});
  nb = branch(nb, nb.stages[1].alternatives[0].id).first;
  nb = branch(nb, nb.stages[1].alternatives[0].id).first;
  nb = branch(nb, nb.stages[3].alternatives[0].id).first;
  const auto flat = flatten(nb);
  ASSERT_EQ(flat.size(), 6u);
  EXPECT_EQ(flat.front().first.label(), "s1=0;s3=0");
  EXPECT_EQ(flat.back().first.label(), "s1=2;s3=1");
  for (const auto& [c, linear] : flat) {
    for (std::size_t s = 0; s < 4; ++s) {
      ASSERT_EQ(linear.stages[s].alternatives.size(), 1u);
      EXPECT_EQ(linear.stages[s].alternatives[0], nb.stages[s].alternatives[c.choice_at(s).value_or(0)]);
    }
  }
}

TEST(Results, CsvShapeAndQuoting) {
  auto nb = new_linear({{"\"a,b\"", "\"say \\\"hi\\\"\"", "\"two\\nlines\""}});
  const auto csv = export_results(nb, execute_all(nb), ResultsFormat::Csv);
  EXPECT_EQ(csv,
            "stage_index,window_id,window_label,combination,output_index,kind,text\r\n"
            "0,w2,Window 1,,0,ok,\"a,b\"\r\n"
            "0,w2,Window 1,,1,ok,\"say \"\"hi\"\"\"\r\n"
            "0,w2,Window 1,,2,ok,\"two\nlines\"\r\n");
}

TEST(Results, EmptyNotebookIsHeaderOnly) {
  auto nb = new_linear({});
  EXPECT_EQ(export_results(nb, execute_all(nb), ResultsFormat::Csv),
            "stage_index,window_id,window_label,combination,output_index,kind,text\r\n");
  EXPECT_EQ(export_results(nb, execute_all(nb), ResultsFormat::Json), "[]\n");
}

TEST(Results, ErrorAndSkippedRows) {
  auto nb = new_linear({{"1", "error(\"bad\")"}, {"2"}});
  const auto rows = results_table(nb, execute_all(nb));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].kind, "ok");
  EXPECT_EQ(rows[1].kind, "error");
  EXPECT_EQ(rows[1].text, "UserError: bad");
  EXPECT_EQ(rows[1].output_index, 1u);
  EXPECT_EQ(rows[2].kind, "skipped");
  EXPECT_EQ(rows[2].stage_index, 1u);
  const auto json = nlohmann::json::parse(export_results(nb, execute_all(nb), ResultsFormat::Json));
  EXPECT_EQ(json.size(), 3u);
  EXPECT_EQ(json[1]["kind"], "error");
}

TEST(Results, SixCombinationFinalWindowHasSixRows) {
  const auto nb = load(read_file(std::filesystem::path(BRANCHNB_FIXTURES) / "three_by_two.nbk.json"));
  const auto rows = results_table(nb, execute_all(nb));
  int final_rows = 0;
  for (const auto& r : rows) final_rows += r.stage_index == nb.stages.size() - 1;
  EXPECT_EQ(final_rows, 6);
}

TEST(Results, RecordedFixtureResultsStillMatch) {
  for (const auto& name : {"knn_branch", "error_task", "ten_windows", "two_by_two", "three_by_two"}) {
    const auto dir = std::filesystem::path(BRANCHNB_FIXTURES);
    const auto nb = load(read_file(dir / (std::string(name) + ".nbk.json")));
    EXPECT_EQ(export_results(nb, execute_all(nb), ResultsFormat::Csv),
              read_file(dir / (std::string(name) + ".results.csv")))
        << name;
  }
}
