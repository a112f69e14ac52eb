#include <gtest/gtest.h>

#include "cli_support.hpp"

using namespace usersim;
using testing_support::read_file;
using testing_support::run_cli;
using testing_support::write_file;

namespace {

const std::string kMultiwoz = std::string(USERSIM_DATA_DIR) + "/ontologies/multiwoz.json";
const std::string kSgd = std::string(USERSIM_DATA_DIR) + "/ontologies/sgd.json";

std::vector<Json> jsonl(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

}  // namespace

TEST(Cli, OntologyCounts) {
  auto a = run_cli("ontology-validate " + kMultiwoz);
  EXPECT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.output, "7 domains, 5 user intents, 49 slots, 185 values\n");
  auto b = run_cli("ontology-validate " + kSgd);
  EXPECT_EQ(b.exit_code, 0);
  EXPECT_EQ(b.output, "20 domains, 11 user intents, 97 slots, 290 values\n");
}

TEST(Cli, MalformedOntologyExitsTwo) {
  auto dir = testing_support::fresh_dir("bad");
  write_file(dir / "bad.json", "{\n  \"name\": 1,\n  oops\n}");
  auto r = run_cli("ontology-validate " + (dir / "bad.json").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
  EXPECT_EQ(run_cli("simulate --p-u 2").exit_code, 2);
  EXPECT_EQ(run_cli("no-such-command").exit_code, 2);
}

TEST(Cli, SimulateIsDeterministic) {
  auto dir = testing_support::fresh_dir("det");
  auto a = run_cli("simulate -n 15 --seed 4 --out-dir " + (dir / "a").string());
  auto b = run_cli("simulate -n 15 --seed 4 --out-dir " + (dir / "b").string());
  ASSERT_EQ(a.exit_code, 0) << a.output;
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(read_file(dir / "a" / "transcripts.jsonl"), read_file(dir / "b" / "transcripts.jsonl"));
  EXPECT_NE(a.output.find("success_rate=1.000"), std::string::npos) << a.output;
  auto lines = jsonl(read_file(dir / "a" / "transcripts.jsonl"));
  ASSERT_EQ(lines.size(), 16u);
  EXPECT_TRUE(lines[0].contains("meta"));
  EXPECT_EQ(lines[0]["meta"]["seed"], 4);
}

TEST(Cli, MaxTurnsEnforced) {
  auto dir = testing_support::fresh_dir("turns");
  auto r = run_cli("simulate -n 10 --max-turns 2 --out-dir " + dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  auto lines = jsonl(read_file(dir / "transcripts.jsonl"));
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_LE(lines[i]["total_turns"].get<int>(), 2);
}

TEST(Cli, ConfigFileWithOverrides) {
  auto dir = testing_support::fresh_dir("cfg");
  write_file(dir / "run.toml", "[simulate]\ndialogues = 3\np-u = 0.0\n");
  auto r = run_cli("--config " + (dir / "run.toml").string() + " simulate --out-dir " + dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("dialogues=3 success_rate=0.000"), std::string::npos) << r.output;
  auto o = run_cli("simulate --p-u 1 --out-dir " + dir.string() + " --config " + (dir / "run.toml").string());
  EXPECT_NE(o.output.find("success_rate=1.000"), std::string::npos) << o.output;
  write_file(dir / "typo.toml", "[simulate]\ndialogs = 3\n");
  EXPECT_EQ(run_cli("--config " + (dir / "typo.toml").string() + " simulate").exit_code, 2);
}

TEST(Cli, PairsDifferOnlyInInput) {
  auto dir = testing_support::fresh_dir("pairs");
  ASSERT_EQ(run_cli("make-corpus -n 5 --out-dir " + dir.string()).exit_code, 0);
  const auto corpus = (dir / "corpus.jsonl").string();
  for (auto f : {"full", "no_history", "no_goal_no_history"})
    ASSERT_EQ(run_cli(std::string("make-pairs --features ") + f + " --corpus " + corpus + " --out-dir " + dir.string()).exit_code, 0);
  auto full = jsonl(read_file(dir / "pairs_full.jsonl"));
  auto bare = jsonl(read_file(dir / "pairs_no_goal_no_history.jsonl"));
  ASSERT_EQ(full.size(), bare.size());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(full[i]["output"], bare[i]["output"]);
    differing += full[i]["input"] != bare[i]["input"];
  }
  EXPECT_GT(differing, 0u);
  EXPECT_EQ(run_cli("make-pairs --features everything --corpus " + corpus).exit_code, 2);
}

TEST(Cli, EvalSemanticSelfIsPerfect) {
  auto dir = testing_support::fresh_dir("sem");
  ASSERT_EQ(run_cli("make-corpus -n 5 --out-dir " + dir.string()).exit_code, 0);
  auto r = run_cli("eval-semantic --gold " + (dir / "corpus.jsonl").string() + " --out-dir " + dir.string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("F1    1.0000"), std::string::npos) << r.output;
}

TEST(Cli, GraphDumpMatchesLibrary) {
  auto dir = testing_support::fresh_dir("graph");
  write_file(dir / "goal.json", serialize_goal(testing_support::hotel_taxi_goal()));
  auto r = run_cli("graph-dump --goal " + (dir / "goal.json").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(r.output, build_graph(testing_support::multiwoz(), testing_support::hotel_taxi_goal(), {}).dump());
}

TEST(Cli, ExternalGeneratorEndToEnd) {
  auto dir = testing_support::fresh_dir("ext");
  auto r = run_cli(std::string("simulate -n 5 --generator \"external:stdio:") + USERSIM_FAKE_GENERATOR +
                   " first\" --out-dir " + dir.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("dialogues=5"), std::string::npos);
}

TEST(Cli, EverySubcommandOnBothOntologies) {
  for (const auto& [path, o] : {std::pair{kMultiwoz, &testing_support::multiwoz()}, std::pair{kSgd, &testing_support::sgd()}}) {
    auto dir = testing_support::fresh_dir("all");
    for (const auto& run : testing_support::run_every_subcommand(path, *o, dir))
      EXPECT_EQ(run.result.exit_code, 0) << path << " " << run.name << "\n" << run.result.output;
    for (auto f : {"transcripts.jsonl", "summary.json", "corpus.jsonl", "pairs_no_history.jsonl", "policy_r1.json",
                   "curve_r1.tsv", "cross_reward.tsv", "cross_eval.tsv", "nlg_report.json"})
      EXPECT_TRUE(std::filesystem::exists(dir / f)) << path << " " << f;
  }
}
