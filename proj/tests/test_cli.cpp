#include "actguard/cli.hpp"
#include "actguard/episodeio.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace actguard;
using actguard::fixtures::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = cli_dispatch(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  return lines;
}

std::string path(const TempDir& dir, const std::string& name) { return (dir / name).string(); }

}  // namespace

TEST(Cli, PipelineSmoke) {
  TempDir dir;
  auto r = run({"simulate", "--family", "all", "--seed", "3", "--n", "40", "--out", path(dir, "bench.jsonl"),
                "--demos-out", path(dir, "demos.jsonl"), "--n-demos", "10", "--manifest", path(dir, "manifest.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bench = read_episodes(dir / "bench.jsonl");
  EXPECT_EQ(bench.episodes.size(), 120u);
  EXPECT_EQ(read_episodes(dir / "demos.jsonl").episodes.size(), 30u);

  r = run({"calibrate", "--demos", path(dir, "demos.jsonl"), "--out", path(dir, "contract.json"), "--monitor-config",
           path(dir, "monitor.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("holdout_coverage"), std::string::npos);
  const auto contract = read_contract(dir / "contract.json");
  EXPECT_EQ(contract.provenance, Provenance::conformal);

  r = run({"metrics", "--episodes", path(dir, "bench.jsonl"), "--config", path(dir, "monitor.json"), "--contract",
           path(dir, "contract.json"), "--out", path(dir, "metrics.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_metrics(dir / "metrics.csv").rows.size(), 120u);

  r = run({"evaluate", "--metrics", path(dir, "metrics.csv"), "--seed", "1", "--n-boot", "200", "--out",
           path(dir, "report.json"), "--fisher", "pusht:116,84,114,86"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = parse_report(read_text_file(dir / "report.json"));
  EXPECT_EQ(report.overall.n, 120u);
  EXPECT_EQ(report.by_family.size(), 3u);
  EXPECT_NE(r.out.find("reversal_rate"), std::string::npos);
}

TEST(Cli, SimulateIsReproducible) {
  TempDir dir;
  for (const char* name : {"a.csv", "b.csv"}) {
    ASSERT_EQ(run({"simulate", "--family", "chunked", "--seed", "11", "--n", "20", "--out", path(dir, name)}).code, 0);
  }
  EXPECT_EQ(read_text_file(dir / "a.csv"), read_text_file(dir / "b.csv"));
}

TEST(Cli, FisherOnlyEvaluate) {
  TempDir dir;
  const auto r = run({"evaluate", "--seed", "0", "--out", path(dir, "r.json"), "--fisher", "116,84,114,86"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = parse_report(read_text_file(dir / "r.json"));
  ASSERT_EQ(report.fisher_tests.size(), 1u);
  EXPECT_NEAR(report.fisher_tests[0].p, 0.92, 0.005);
  EXPECT_NE(r.out.find("p=0.9195"), std::string::npos);
  EXPECT_EQ(r.out.find("group all"), std::string::npos);
}

TEST(Cli, MonitorPassThroughWithUnboundedContract) {
  TempDir dir;
  write_contract(SafetyContractd::unbounded(2), dir / "open.json");
  const std::string input =
      "{\"t\":0,\"a\":[1.5,-2]}\n"
      "{\"t\": 1, \"a\": [100000, 3.25]}\n"
      "{\"reset\":true}\n"
      "{\"t\":0,\"a\":[0,0]}\n";
  const auto r = run({"monitor", "--contract", path(dir, "open.json")}, input);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, input);
}

TEST(Cli, MonitorRewritesUnsafeActionsAndLogs) {
  TempDir dir;
  write_contract(SafetyContractd::uniform(1, 0, 10, 2), dir / "c.json");
  const auto r = run({"monitor", "--contract", path(dir, "c.json"), "--violations", path(dir, "v.jsonl")},
                     "{\"t\":0,\"a\":[5]}\n{\"t\":1,\"a\":[9]}\n");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = lines_of(r.out);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1], "{\"t\":1,\"a\":[7.0]}");
  std::ifstream v(dir / "v.jsonl");
  const auto recs = read_violations(v);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].kind, ViolationKind::velocity);
  EXPECT_EQ(recs[0].magnitude, 2.0);
}

TEST(Cli, MonitorMalformedLine) {
  TempDir dir;
  write_contract(SafetyContractd::unbounded(1), dir / "c.json");
  const auto r = run({"monitor", "--contract", path(dir, "c.json")}, "{\"t\":0,\"a\":[1]}\n{\"t\":1,\"a\":[1}\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.rfind("actguard: error[data]:", 0), 0u) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 1u);
}

TEST(Cli, MonitorFailClosedStopsAfterAlarm) {
  TempDir dir;
  std::mt19937_64 rng(2);
  const auto demos = fixtures::gaussian_episodes(10, 30, 1, rng);
  ASSERT_EQ(0, [&] {
    Dataset ds;
    ds.episodes = demos;
    write_episodes(ds, dir / "demos.jsonl");
    return run({"calibrate", "--demos", path(dir, "demos.jsonl"), "--out", path(dir, "c.json")}).code;
  }());
  std::string input;
  for (int t = 0; t < 20; ++t) input += "{\"t\":" + std::to_string(t) + ",\"a\":[50]}\n";
  const auto r = run({"monitor", "--contract", path(dir, "c.json"), "--cusum-h", "2", "--fail-closed", "--cusum-log",
                      path(dir, "cusum.jsonl")},
                     input);
  ASSERT_EQ(r.code, 0) << r.err;
  // s climbs by 0.95 per step and first exceeds 2 at step 3
  EXPECT_EQ(lines_of(r.out).size(), 2u);
  EXPECT_NE(r.err.find("alarm"), std::string::npos);
  EXPECT_EQ(lines_of(read_text_file(dir / "cusum.jsonl")).size(), 4u);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"simulate", "--bogus"}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  TempDir dir;
  const auto r = run({"simulate", "--family", "quantum", "--seed", "1", "--out", path(dir, "x.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("actguard: error[usage]:", 0), 0u) << r.err;
  write_contract(SafetyContractd::uniform(1, 0, 1, 1), dir / "plain.json");
  EXPECT_EQ(run({"monitor", "--contract", path(dir, "plain.json"), "--cusum-log", path(dir, "c.jsonl")}).code, 1);
}

TEST(Cli, DataErrors) {
  TempDir dir;
  EXPECT_EQ(run({"calibrate", "--demos", path(dir, "missing.jsonl"), "--out", path(dir, "c.json")}).code, 2);
  write_text_file(dir / "bad.json", "{\"format_version\":1}");
  EXPECT_EQ(run({"monitor", "--contract", path(dir, "bad.json")}).code, 2);
}

TEST(Cli, Help) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"calibrate", "monitor", "metrics", "evaluate", "simulate", "bench"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_NE(run({"monitor", "--help"}).out.find("--fail-closed"), std::string::npos);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = ACTGUARD_BINARY;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  const int status = std::system((bin + " frobnicate 2> /dev/null").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
}

TEST(Cli, BenchReportsLatency) {
  const auto r = run({"bench", "--dims", "3", "--steps", "2000", "--warmup", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"p50_us\""), std::string::npos);
  EXPECT_NE(r.out.find("\"dims\":3"), std::string::npos);
}
