#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "pvmms/cli.hpp"

using namespace pvmms;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pvmms_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string &name) const { return (dir_ / name).string(); }
  std::string gen(const std::string &which, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"gen", "--which", which, "--out", path(which + ".txt")};
    args.insert(args.end(), extra.begin(), extra.end());
    const Result r = invoke(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return path(which + ".txt");
  }
  fs::path dir_;
};

bool has_line(const std::string &text, const std::string &line) {
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l))
    if (l == line)
      return true;
  return false;
}

} // namespace

TEST_F(Cli, SharesOnExamples) {
  Result r = invoke({"shares", "--input", gen("jr-vs-mms")});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(has_line(r.out, "MMS 5 6 4")) << r.out;
  EXPECT_TRUE(has_line(r.out, "N3_FINE 5 6 4")) << r.out;
  r = invoke({"shares", "--input", gen("mms-vs-rds")});
  EXPECT_TRUE(has_line(r.out, "MMS 0 0 0 0")) << r.out;
  EXPECT_TRUE(has_line(r.out, "RDS 1 1 1 1")) << r.out;
  EXPECT_EQ(r.out.find("N3_"), std::string::npos);
}

TEST_F(Cli, SharesOnEmptyInstance) {
  cli::write_file(path("e.txt"), "3 0\n\n\n\n");
  const Result r = invoke({"shares", "--input", path("e.txt")});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(has_line(r.out, "MMS 0 0 0")) << r.out;
  EXPECT_TRUE(has_line(r.out, "RDS 0 0 0")) << r.out;
}

TEST_F(Cli, SharesJson) {
  const Result r = invoke({"shares", "--input", gen("sec4-example"), "--json"});
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["agents"][0]["mms_adapt"], 7);
  EXPECT_EQ(j["agents"][0]["rds"], "7");
}

TEST_F(Cli, ParseErrorsExitTwo) {
  cli::write_file(path("bad.txt"), "3 2\n01\n0x\n11\n");
  const Result r = invoke({"shares", "--input", path("bad.txt")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3, column 2"), std::string::npos) << r.err;
  EXPECT_EQ(invoke({"shares", "--input", path("missing.txt")}).code, 2);
}

TEST_F(Cli, BudgetExitsThree) {
  const std::string sec4 = gen("sec4-example"), jr = gen("jr-vs-mms");
  ::setenv(kBudgetEnvVar, "10", 1);
  const Result r = invoke({"shares", "--input", sec4});
  ::unsetenv(kBudgetEnvVar);
  EXPECT_EQ(r.code, 3) << r.err;
  ::setenv(kBudgetEnvVar, "many", 1);
  const Result bad = invoke({"shares", "--input", jr});
  ::unsetenv(kBudgetEnvVar);
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, RunRules) {
  Result r = invoke({"run", "--rule", "ptrr3", "--input", gen("jr-vs-mms")});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(has_line(r.out, "OUTCOME 111011100")) << r.out;
  EXPECT_TRUE(has_line(r.out, "UTILITIES 5 6 4"));
  EXPECT_TRUE(has_line(r.out, "ALPHA_ADAPT 1"));
  r = invoke({"run", "--rule", "mnw", "--input", gen("sec4-example")});
  EXPECT_TRUE(has_line(r.out, "UTILITIES 6 12 12")) << r.out;
  EXPECT_TRUE(has_line(r.out, "ALPHA_ADAPT 6/7"));
  r = invoke({"run", "--rule", "deferred4", "--input",
           gen("all-consensus", {"--agents", "4", "--decisions", "5"})});
  EXPECT_TRUE(has_line(r.out, "UTILITIES 5 5 5 5")) << r.out;
}

TEST_F(Cli, RunRejectsIncompatibleRules) {
  EXPECT_EQ(invoke({"run", "--rule", "deferred4", "--input", gen("jr-vs-mms")}).code, 2);
  EXPECT_EQ(invoke({"run", "--rule", "ptrr3", "--input", gen("mms-vs-rds")}).code, 2);
  EXPECT_EQ(invoke({"run", "--rule", "bogus", "--input", gen("jr-vs-mms")}).code, 2);
}

TEST_F(Cli, GracefulMapFile) {
  cli::write_file(path("map.txt"), "001 MAJ,MAJ,MIN\n010 MAJ,MAJ,MIN\n011 MAJ,MAJ,MIN\n");
  const Result r = invoke({"run", "--rule", "graceful:" + path("map.txt"), "--input", gen("jr-vs-mms")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(has_line(r.out, "OUTCOME 111011100")) << r.out;
  cli::write_file(path("bad.txt"), "001 MAJ,MIN\n");
  EXPECT_EQ(invoke({"run", "--rule", "graceful:" + path("bad.txt"), "--input", gen("jr-vs-mms")}).code,
            2);
}

TEST_F(Cli, GenRunVerifyRoundTrip) {
  const std::string inst = gen("sec4-example");
  const std::string text = cli::read_file(inst);
  EXPECT_EQ(to_text(parse_matrix(text)), text);
  const Result r = invoke({"run", "--rule", "majority", "--input", inst, "--transcript",
                        path("t.json")});
  ASSERT_EQ(r.code, 0);
  const Result v = invoke({"verify", "--input", inst, "--outcome", path("t.json")});
  EXPECT_EQ(v.code, 0);
  EXPECT_TRUE(has_line(v.out, "ALPHA_ADAPT 6/7")) << v.out;
  EXPECT_EQ(invoke({"verify", "--input", inst, "--outcome", path("t.json"), "--threshold", "1"}).code,
            1);
  cli::write_file(path("o.txt"), "111111111111111\n");
  const Result w = invoke({"verify", "--input", inst, "--outcome", path("o.txt"), "--json"});
  EXPECT_EQ(json::parse(w.out)["alpha_adapt"], "6/7");
  // JSON instances are accepted too
  const Result js = invoke({"--json", "gen", "--which", "jr-vs-mms"});
  cli::write_file(path("jr.json"), js.out);
  EXPECT_TRUE(has_line(invoke({"shares", "--input", path("jr.json")}).out, "MMS 5 6 4"));
}

TEST_F(Cli, AttackWritesCertificates) {
  Result r = invoke({"attack", "--rule", "majority", "--agents", "7", "--out", path("c.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(has_line(r.out, "GUARANTEE 1"));
  EXPECT_TRUE(has_line(r.out, "ACHIEVED 0"));
  EXPECT_EQ(invoke({"verify", "--certificate", path("c.json")}).code, 0);

  r = invoke({"attack", "--rule", "ptrr-generalized", "--agents", "7", "--out", path("g.json")});
  EXPECT_EQ(r.code, 0);
  const Result v = invoke({"verify", "--certificate", path("g.json")});
  EXPECT_TRUE(has_line(v.out, "CERTIFICATE valid"));

  json c = json::parse(cli::read_file(path("g.json")));
  c["achieved"] = c["guarantee"];
  cli::write_file(path("bad.json"), c.dump());
  EXPECT_EQ(invoke({"verify", "--certificate", path("bad.json")}).code, 1);
}

TEST_F(Cli, AttackArgumentErrors) {
  EXPECT_EQ(invoke({"attack", "--rule", "majority", "--agents", "5"}).code, 2);
  EXPECT_EQ(invoke({"attack", "--rule", "mnw", "--agents", "7"}).code, 2);
  EXPECT_EQ(invoke({"attack", "--rule", "majority"}).code, 2);
}

TEST_F(Cli, GenFamilies) {
  const auto gap = parse_matrix(cli::read_file(gen("mnw-gap", {"--agents", "9"})));
  EXPECT_EQ(gap.n_agents(), 10u);
  EXPECT_EQ(gap.n_decisions(), 360u);
  EXPECT_EQ(parse_matrix(cli::read_file(gen("stage1", {"--agents", "7"}))).n_decisions(), 7u);
  EXPECT_EQ(parse_matrix(cli::read_file(gen("stage2", {"--agents", "7"}))).n_decisions(), 6u);
  EXPECT_EQ(parse_matrix(cli::read_file(gen("stage3a", {"--agents", "7"}))).n_decisions(), 4u);
  EXPECT_EQ(parse_matrix(cli::read_file(gen("stage3b", {"--agents", "7"}))).n_decisions(), 36u);
  EXPECT_EQ(parse_matrix(cli::read_file(gen("graceful-cap:final-45"))).n_decisions(), 8u);
  EXPECT_EQ(invoke({"gen", "--which", "mnw-gap", "--agents", "8"}).code, 2);
  EXPECT_EQ(invoke({"gen", "--which", "all-opposed"}).code, 2);
  EXPECT_EQ(invoke({"gen", "--which", "stage2", "--agents", "7", "--mu", "2"}).code, 2);
  EXPECT_EQ(invoke({"gen", "--which", "nothing"}).code, 2);
}

TEST_F(Cli, Search) {
  Result r = invoke({"search", "--rule", "ptrr3", "--agents", "3", "--max-decisions", "6"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(has_line(r.out, "RESULT none")) << r.out;
  r = invoke({"search", "--rule", "majority", "--agents", "3", "--max-decisions", "3", "--out",
           path("cx.txt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(has_line(r.out, "RESULT counterexample"));
  EXPECT_EQ(cli::read_file(path("cx.txt")), "3 3\n000\n111\n000\n");
  // the emitted instance replays through run
  const Result run = invoke({"run", "--rule", "majority", "--input", path("cx.txt")});
  EXPECT_TRUE(has_line(run.out, "UTILITIES 3 0 3")) << run.out;
  r = invoke({"search", "--rule", "muffled3", "--agents", "3", "--max-decisions", "5", "--share",
           "egal"});
  EXPECT_EQ(r.code, 0);
}

TEST_F(Cli, SearchSamplingNeedsSeed) {
  EXPECT_EQ(invoke({"search", "--rule", "ptrr3", "--agents", "3", "--max-decisions", "6",
                 "--sample", "10"})
                .code,
            2);
  const std::vector<std::string> args{"search", "--rule", "ptrr3", "--agents", "3",
                                      "--max-decisions", "8", "--sample", "50", "--seed", "3",
                                      "--json"};
  const Result a = invoke(args), b = invoke(args);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(invoke({"search", "--rule", "ptrr3", "--agents", "3", "--max-decisions", "6",
                 "--share", "neither"})
                .code,
            2);
}

TEST_F(Cli, Usage) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"shares"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST_F(Cli, BinaryExitCodes) {
  const std::string bin = PVMMS_CLI_PATH;
  const std::string quiet = " > /dev/null 2>&1";
  auto code = [&](const std::string &args) {
    const int raw = std::system((bin + " " + args + quiet).c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(code("gen --which jr-vs-mms --out " + path("jr.txt")), 0);
  EXPECT_EQ(code("search --rule majority --agents 3 --max-decisions 3"), 1);
  EXPECT_EQ(code("attack --rule majority --agents 5"), 2);
  EXPECT_EQ(std::system(("PVMMS_SEARCH_BUDGET=10 " + bin + " shares --input " +
                         gen("sec4-example") + quiet)
                            .c_str()) >>
                8,
            3);
}
