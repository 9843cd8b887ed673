#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "talift/cli.hpp"
#include "talift/cost_model.hpp"
#include "talift/eval.hpp"
#include "talift/loop_sched.hpp"
#include "talift/util.hpp"
#include "test_support.hpp"

using namespace talift;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string golden_path(const std::string& kernel) { return (asset_dir() / "kernels" / (kernel + ".golden.c")).string(); }
std::string input_path(const std::string& name) { return (asset_dir() / "replay" / "inputs" / name).string(); }

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

// A two-kernel slice of the demo experiment, pointed at the shipped fixtures.
fs::path small_config(const fs::path& dir, const std::string& replay_dir) {
  json doc = {{"kernels", {"gv2", "gm3"}},
              {"ablations", {{{"label", "One-shot"}}}},
              {"n", 20},
              {"k", {1, 10}},
              {"testcases_per_kernel", 5},
              {"backend", "replay:" + replay_dir}};
  auto p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

}  // namespace

TEST(Cli, VerifyGoldenPasses) {
  auto r = run({"verify", "--program", golden_path("gv1"), "--kernel", "gv1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS gv1 (20 testcases)"), std::string::npos);
}

TEST(Cli, VerifyWrongProgramFails) {
  test_support::TempDir dir;
  auto r = run({"verify", "--program", golden_path("gv2"), "--kernel", "gv1", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  auto verdict = json::parse(read_file(dir.path() / "verdict.json"));
  EXPECT_FALSE(verdict.at("passed").get<bool>());
}

TEST(Cli, UsageErrors) {
  auto unknown = run({"verify", "--program", golden_path("gv1"), "--kernel", "gv1", "--bogus"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("--bogus"), std::string::npos);
  EXPECT_NE(unknown.err.find("Usage:"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"verify", "--program", golden_path("gv1"), "--kernel", "nope"}).code, 2);
  EXPECT_EQ(run({"repair", "--program", golden_path("gv1"), "--kernel", "gv1", "--constants", "1,x"}).code, 2);
  EXPECT_EQ(run({"optimize", "--program", golden_path("gv1"), "--kernel", "gv1", "--mode", "fast"}).code, 2);
}

TEST(Cli, SimulateMatchesReference) {
  auto r = run({"simulate", "--program", golden_path("gm3"), "--kernel", "gm3", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("reference matches"), std::string::npos);
}

TEST(Cli, EvaluateMissingFixtureNamesFingerprint) {
  test_support::TempDir dir;
  fs::create_directories(dir.path() / "empty");
  auto cfg = small_config(dir.path(), (dir.path() / "empty").string());
  const auto& k = kernels::find_kernel(test_support::all_kernels(), "gv2");
  auto fp = prompts::build_translation_prompt(eval::prompt_spec(eval::Ablation{.label = "One-shot"}, k)).fingerprint;
  auto r = run({"evaluate", "--config", cfg.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find(fp), std::string::npos) << r.err;
}

TEST(Cli, EvaluateReplayIsByteIdentical) {
  test_support::TempDir dir;
  auto cfg = small_config(dir.path(), (asset_dir() / "replay").string());
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  auto a = run({"evaluate", "--config", cfg.string(), "--out", (dir.path() / "a").string(), "--jobs", "1"});
  auto b = run({"evaluate", "--config", cfg.string(), "--out", (dir.path() / "b").string(), "--jobs", "3"});
  ::unsetenv("SOURCE_DATE_EPOCH");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  auto ta = tree(dir.path() / "a"), tb = tree(dir.path() / "b");
  EXPECT_EQ(ta.size(), 3u + 40u);
  EXPECT_EQ(ta, tb);
  auto manifest = json::parse(ta.at("manifest.json"));
  EXPECT_EQ(manifest["metadata"]["date"], "1970-01-01");
  EXPECT_DOUBLE_EQ(manifest["rows"][0]["pass_at_k"]["k=1"].get<double>(), 0.5);
}

TEST(Cli, TranslateReplay) {
  auto r = run({"translate", "--kernel", "gv2", "--backend", "replay", "--n", "4"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("samples passed"), std::string::npos);
}

TEST(Cli, RepairMarkedTemplate) {
  test_support::TempDir dir;
  auto r = run({"repair", "--candidate", input_path("gm3_marked.c"), "--kernel", "gm3", "--constants", "0,1,3,4,12",
                "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto& k = kernels::find_kernel(test_support::all_kernels(), "gm3");
  auto cases = kernels::generate_testcases(k, 11, 10);
  EXPECT_TRUE(kernels::verify_text(read_file(dir.path() / "repaired.txt"), k, cases).passed);
  EXPECT_EQ(json::parse(read_file(dir.path() / "repair.json"))["assignment"]["h0"], 4);
}

TEST(Cli, RepairUnmarkedWithoutBackendGivesUp) {
  auto r = run({"repair", "--candidate", input_path("gm3_broken.c"), "--kernel", "gm3"});
  EXPECT_EQ(r.code, 1);
  auto with_model = run({"repair", "--candidate", input_path("gm3_broken.c"), "--kernel", "gm3", "--backend", "replay"});
  EXPECT_EQ(with_model.code, 0) << with_model.err;
}

TEST(Cli, OptimizeRulesReducesCost) {
  test_support::TempDir dir;
  auto r = run({"optimize", "--program", input_path("gv1_redundant.c"), "--kernel", "gv1", "--mode", "rules", "--out",
                dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto& k = kernels::find_kernel(test_support::all_kernels(), "gv1");
  auto before = cost::program_cost(isa::parse_program(read_file(input_path("gv1_redundant.c")), k.buffer_table()));
  auto optimized = read_file(dir.path() / "optimized.txt");
  auto after = cost::program_cost(isa::parse_program(optimized, k.buffer_table()));
  EXPECT_LT(after.total, before.total);
  EXPECT_TRUE(kernels::verify_text(optimized, k, kernels::generate_testcases(k, 5, 10)).passed);
}

TEST(Cli, OptimizeLlmModeNeedsBackend) {
  auto r = run({"optimize", "--program", golden_path("gv1"), "--kernel", "gv1", "--mode", "llm"});
  EXPECT_EQ(r.code, 2);
  auto replay = run({"optimize", "--program", input_path("gv1_redundant.c"), "--kernel", "gv1", "--mode", "llm",
                     "--backend", "replay"});
  EXPECT_EQ(replay.code, 0) << replay.err;
  EXPECT_NE(replay.out.find("plan (llm)       accepted"), std::string::npos);
}

TEST(Cli, ScheduleCommandList) {
  test_support::TempDir dir;
  auto r = run({"schedule", "--config", (asset_dir() / "schedule" / "doitgen_transcript.json").string(), "--out",
                dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto transcript = json::parse(read_file(dir.path() / "transcript.json"));
  ASSERT_EQ(transcript.size(), 3u);
  EXPECT_NE(transcript[0]["result"].get<std::string>().find("expected the body of the outer loop to be a single loop"),
            std::string::npos);
  EXPECT_EQ(transcript[1]["result"], "ok");
  auto final_kernel = sched::parse_kernel(read_file(dir.path() / "kernel.exo"));
  EXPECT_TRUE(sched::equal(final_kernel, sched::load_kernel(asset_dir() / "schedule" / "doitgen_tiled.exo")));
}

TEST(Cli, ScheduleReplaySessionMatchesCommandList) {
  test_support::TempDir dir;
  auto a = run({"schedule", "--backend", "replay", "--out", (dir.path() / "llm").string()});
  auto b = run({"schedule", "--config", (asset_dir() / "schedule" / "doitgen_transcript.json").string(), "--out",
                (dir.path() / "list").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(tree(dir.path() / "llm"), tree(dir.path() / "list"));
}
