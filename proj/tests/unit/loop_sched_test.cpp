#include <gtest/gtest.h>

#include <random>

#include "talift/loop_sched.hpp"
#include "talift/util.hpp"

using namespace talift;
using namespace talift::sched;

namespace {

LoopNest doitgen() { return load_kernel(asset_dir() / "schedule" / "doitgen.exo"); }

ScheduleCommand cmd(const std::string& json) { return parse_command(nlohmann::json::parse(json)); }

const char* kTileP =
    R"({"optimization": "tile", "arguments": {"line": "for p in seq(0, 64): #1", "tile_size": "16", "outer_name": "p_outer", "inner_name": "p_inner"}})";

// doitgen at extent n with the loops written out directly
ArrayValues doitgen_oracle(ArrayValues v, int n) {
  auto& A = v["A"];
  auto& C4 = v["C4"];
  auto& sum = v["sum"];
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      for (int p = 0; p < n; ++p) {
        sum[p] = 0.0f;
        for (int s = 0; s < n; ++s) sum[p] += A[(r * n + q) * n + s] * C4[s * n + p];
      }
      for (int p = 0; p < n; ++p) A[(r * n + q) * n + p] = sum[p];
    }
  return v;
}

ArrayValues random_inputs(const LoopNest& k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ArrayValues v;
  for (const auto& a : k.arrays) {
    auto& x = v[a.name];
    x.resize(static_cast<std::size_t>(a.elements()));
    for (auto& e : x) e = static_cast<float>(uniform_int(rng, -3, 3));
  }
  return v;
}

}  // namespace

TEST(LoopParse, DoitgenStructure) {
  auto k = doitgen();
  EXPECT_EQ(k.name, "doitgen");
  ASSERT_EQ(k.arrays.size(), 3u);
  EXPECT_EQ(k.arrays[0].extents, (std::vector<std::int64_t>{64, 64, 64}));
  EXPECT_EQ(k.arrays[2].name, "sum");
  const auto& r = std::get<Loop>(k.body.at(0).node);
  const auto& q = std::get<Loop>(r.body.at(0).node);
  ASSERT_EQ(q.body.size(), 2u);
  const auto& p0 = std::get<Loop>(q.body[0].node);
  ASSERT_EQ(p0.body.size(), 2u);
  EXPECT_FALSE(std::get<Assign>(p0.body[0].node).accumulate);
  const auto& s = std::get<Loop>(p0.body[1].node);
  EXPECT_TRUE(std::get<Assign>(s.body.at(0).node).accumulate);
  EXPECT_EQ(render_line(s.body[0]), "sum[p] += A[r, q, s] * C4[s, p]");
  const auto& p1 = std::get<Loop>(q.body[1].node);
  EXPECT_EQ(render_line(p1.body.at(0)), "A[r, q, p] = sum[p]");
}

TEST(LoopParse, RoundTrip) {
  auto text = read_file(asset_dir() / "schedule" / "doitgen.exo");
  auto k = parse_kernel(text);
  EXPECT_EQ(render_kernel(k), text);
  auto tiled = parse_kernel(read_file(asset_dir() / "schedule" / "doitgen_tiled.exo"));
  EXPECT_TRUE(equal(parse_kernel(render_kernel(tiled)), tiled));
  auto odd = parse_kernel("def f(x: f32[4] @ DRAM, y: f32[4] @ DRAM):\n  for i in seq(0, 4):\n    y[3 - i] = -(x[i] + 2.5) / (1.0 - x[i] * x[i])\n");
  EXPECT_TRUE(equal(parse_kernel(render_kernel(odd)), odd));
  EXPECT_EQ(render_line(std::get<Loop>(odd.body[0].node).body[0]), "y[3 - i] = -(x[i] + 2.5) / (1.0 - x[i] * x[i])");
}

TEST(LoopParse, Errors) {
  auto code = [](const char* text) {
    try {
      parse_kernel(text);
    } catch (const ScheduleError& e) {
      return e.code();
    }
    return SchedErrc::BadCommand;
  };
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n"), SchedErrc::SyntaxError);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, 4):\n"), SchedErrc::SyntaxError);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, n):\n        x[i] = 1.0\n"), SchedErrc::NonConstantBound);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, 5):\n        x[i] = 1.0\n"), SchedErrc::OutOfBounds);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, 4):\n        x[i * i] = 1.0\n"), SchedErrc::SyntaxError);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, 4):\n        z[i] = 1.0\n"), SchedErrc::SyntaxError);
  EXPECT_EQ(code("def f(x: f32[4] @ DRAM):\n    for i in seq(0, 4):\n        x[j] = 1.0\n"), SchedErrc::SyntaxError);
}

TEST(LoopSched, TileMatchesExpectedListing) {
  auto tiled = apply_schedule_command(doitgen(), cmd(kTileP));
  auto want = load_kernel(asset_dir() / "schedule" / "doitgen_tiled.exo");
  EXPECT_TRUE(equal(tiled, want));
  EXPECT_NE(render_kernel(tiled).find("A[r, q, p_inner + 16 * p_outer] = sum[p_inner + 16 * p_outer]"),
            std::string::npos);
}

TEST(LoopSched, ReorderOnStatementBodyQuotesError) {
  auto k = doitgen();
  try {
    apply_schedule_command(k, cmd(R"({"optimization": "reorder", "arguments": {"line": "for p in seq(0, 64): #1"}})"));
    FAIL() << "reorder accepted";
  } catch (const ScheduleError& e) {
    EXPECT_EQ(e.code(), SchedErrc::IllegalRewrite);
    std::string what = e.what();
    EXPECT_NE(what.find("expected the body of the outer loop to be a single loop"), std::string::npos);
    EXPECT_NE(what.find("            ...\n            for p in seq(0, 64):\n                A[r, q, p] = sum[p]  # <-- NODE"),
              std::string::npos)
        << what;
  }
  // two statements in the body
  EXPECT_THROW(apply_schedule_command(k, cmd(R"({"optimization": "reorder", "arguments": {"line": "for q in seq(0, 64):"}})")),
               ScheduleError);
}

TEST(LoopSched, UnrollMissingLine) {
  auto tiled = apply_schedule_command(doitgen(), cmd(kTileP));
  try {
    apply_schedule_command(tiled, cmd(R"({"optimization": "unroll", "arguments": {"line": "for s_outer in seq(0, 4):"}})"));
    FAIL();
  } catch (const ScheduleError& e) {
    EXPECT_EQ(e.code(), SchedErrc::LineNotFound);
  }
}

TEST(LoopSched, NonDivisibleTileAndAmbiguity) {
  auto k = doitgen();
  auto code = [&](const std::string& json) {
    try {
      apply_schedule_command(k, cmd(json));
    } catch (const ScheduleError& e) {
      return e.code();
    }
    return SchedErrc::BadCommand;
  };
  EXPECT_EQ(code(R"({"optimization": "tile", "arguments": {"line": "for s in seq(0, 64):", "tile_size": 7, "outer_name": "so", "inner_name": "si"}})"),
            SchedErrc::NonDivisibleTile);
  EXPECT_EQ(code(R"({"optimization": "unroll", "arguments": {"line": "for p in seq(0, 64):"}})"), SchedErrc::AmbiguousLine);
  EXPECT_EQ(code(R"({"optimization": "unroll", "arguments": {"line": "for p in seq(0, 64): #2"}})"), SchedErrc::LineNotFound);
  EXPECT_EQ(code(R"({"optimization": "tile", "arguments": {"line": "for s in seq(0, 64):", "tile_size": 16, "outer_name": "r", "inner_name": "si"}})"),
            SchedErrc::IllegalRewrite);
}

TEST(LoopSched, OccurrenceSuffixSelects) {
  auto k = doitgen();
  auto all = find_lines(k, "for p in seq(0, 64):");
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(find_lines(k, "for p in seq(0, 64): #0"), std::vector<std::vector<std::size_t>>{all[0]});
  EXPECT_EQ(find_lines(k, "for p in seq(0, 64): #1"), std::vector<std::vector<std::size_t>>{all[1]});
  EXPECT_EQ(find_lines(k, "for  p in seq(0,64)"), all);
}

TEST(LoopSched, CommandProtocol) {
  auto c = cmd(kTileP);
  EXPECT_EQ(c.tile_size, 16);
  EXPECT_EQ(c.to_json(), nlohmann::json::parse(kTileP));
  EXPECT_THROW(cmd(R"({"optimization": "tile", "arguments": {"line": "x", "tile_size": "16"}})"), ScheduleError);
  EXPECT_THROW(cmd(R"({"optimization": "unroll", "arguments": {"line": "x", "extra": "y"}})"), ScheduleError);
  EXPECT_THROW(cmd(R"({"optimization": "vectorize", "arguments": {}})"), ScheduleError);
  EXPECT_THROW(cmd(R"({"optimization": "fission", "arguments": {"line": "x", "location": "middle"}})"), ScheduleError);
  auto got = extract_apply("plan...\nAPPLY: {\"optimization\": \"unroll\", \"arguments\": {\"line\": \"for s in seq(0, 64):\"}}\n");
  ASSERT_TRUE(got);
  EXPECT_EQ(got->kind, CommandKind::Unroll);
  EXPECT_FALSE(extract_apply("no command here"));
  EXPECT_THROW(extract_apply("APPLY: {\"optimization\": "), ScheduleError);
}

TEST(LoopSched, RejectedRewriteLeavesInputUnchanged) {
  const auto k = doitgen();
  const auto before = render_kernel(k);
  EXPECT_THROW(apply_schedule_command(k, cmd(R"({"optimization": "reorder", "arguments": {"line": "for r in seq(0, 64):"}})")),
               ScheduleError);
  EXPECT_EQ(render_kernel(k), before);
}

TEST(LoopSched, FissionAndFuse) {
  auto small = scale_extents(doitgen(), 8);
  auto split = apply_schedule_command(
      small, cmd(R"({"optimization": "fission", "arguments": {"line": "for s in seq(0, 8):", "location": "before"}})"));
  const auto& q = std::get<Loop>(std::get<Loop>(split.body[0].node).body[0].node);
  EXPECT_EQ(q.body.size(), 3u);
  EXPECT_TRUE(check_equivalence(small, split, 5, 1).passed);
  // fusing the two p loops would read sum before it is complete
  EXPECT_THROW(apply_schedule_command(small, cmd(R"({"optimization": "fuse", "arguments": {"line1": "for p in seq(0, 8): #0", "line2": "for p in seq(0, 8): #1"}})")),
               ScheduleError);
  // but fusing them back after the split is fine
  auto fused = apply_schedule_command(split, cmd(R"({"optimization": "fuse", "arguments": {"line1": "for p in seq(0, 8): #0", "line2": "for p in seq(0, 8): #1"}})"));
  EXPECT_TRUE(equal(fused, small));
  // splitting the copy loop away from the reduction it reads is illegal
  EXPECT_THROW(apply_schedule_command(small, cmd(R"({"optimization": "fission", "arguments": {"line": "for p in seq(0, 8): #1", "location": "before"}})")),
               ScheduleError);
}

TEST(LoopSched, ReorderLegalCase) {
  auto k = parse_kernel("def t(x: f32[4, 6] @ DRAM, y: f32[6, 4] @ DRAM):\n    for i in seq(0, 4):\n        for j in seq(0, 6):\n            y[j, i] = x[i, j] * 2.0\n");
  auto r = apply_schedule_command(k, cmd(R"({"optimization": "reorder", "arguments": {"line": "for i in seq(0, 4):"}})"));
  EXPECT_EQ(render_line(r.body[0]), "for j in seq(0, 6):");
  EXPECT_TRUE(check_equivalence(k, r, 5, 3).passed);
  auto bad = parse_kernel("def t(x: f32[8] @ DRAM):\n    for i in seq(0, 4):\n        for j in seq(0, 4):\n            x[i + j] += x[i + j + 1]\n");
  EXPECT_THROW(apply_schedule_command(bad, cmd(R"({"optimization": "reorder", "arguments": {"line": "for i in seq(0, 4):"}})")),
               ScheduleError);
}

TEST(LoopInterp, MatchesOracle) {
  auto k = scale_extents(doitgen(), 16);  // extent 4
  ASSERT_EQ(k.arrays[0].extents[0], 4);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto in = random_inputs(k, seed);
    EXPECT_EQ(interpret(k, in), doitgen_oracle(in, 4));
  }
}

TEST(LoopInterp, IdentityWeightsAndZeros) {
  auto k = scale_extents(doitgen(), 16);
  auto in = random_inputs(k, 5);
  auto& c4 = in["C4"];
  std::fill(c4.begin(), c4.end(), 0.0f);
  for (int i = 0; i < 4; ++i) c4[static_cast<std::size_t>(i * 4 + i)] = 1.0f;
  EXPECT_EQ(interpret(k, in).at("A"), in.at("A"));
  auto zeros = interpret(k, {});
  for (const auto& [name, v] : zeros) {
    EXPECT_TRUE(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) << name;
  }
  EXPECT_THROW(interpret(k, {{"A", std::vector<float>(3)}}), ScheduleError);
  EXPECT_THROW(interpret(k, {{"B", std::vector<float>(3)}}), ScheduleError);
}

TEST(LoopEquivalence, SelfTiledAndFlipped) {
  auto small = scale_extents(doitgen(), 8);
  EXPECT_TRUE(check_equivalence(small, small, 5, 9).passed);
  auto tiled = apply_schedule_command(small, scale_command(cmd(kTileP), 8));
  EXPECT_EQ(render_line(std::get<Loop>(std::get<Loop>(tiled.body[0].node).body[0].node).body[1]), "for p_outer in seq(0, 4):");
  EXPECT_TRUE(check_equivalence(small, tiled, 5, 9).passed);
  auto text = render_kernel(small);
  auto at = text.find("= sum[p]");
  text.replace(at, 8, "= -sum[p]");
  auto flipped = parse_kernel(text);
  auto v = check_equivalence(small, flipped, 5, 9);
  EXPECT_FALSE(v.passed);
  EXPECT_EQ(v.failing_trial, 1);
  auto other = parse_kernel("def doitgen(A: f32[8] @ DRAM):\n    for i in seq(0, 8):\n        A[i] = 0.0\n");
  EXPECT_THROW(check_equivalence(small, other, 1, 0), ScheduleError);
}

TEST(LoopEquivalence, TileThenUnrollMatchesUnroll) {
  auto small = scale_extents(doitgen(), 8);
  auto unrolled = apply_schedule_command(small, cmd(R"({"optimization": "unroll", "arguments": {"line": "for p in seq(0, 8): #1"}})"));
  auto tiled = apply_schedule_command(small, scale_command(cmd(kTileP), 8));
  auto t1 = apply_schedule_command(tiled, cmd(R"({"optimization": "unroll", "arguments": {"line": "for p_inner in seq(0, 2):"}})"));
  auto t2 = apply_schedule_command(t1, cmd(R"({"optimization": "unroll", "arguments": {"line": "for p_outer in seq(0, 4):"}})"));
  EXPECT_TRUE(check_equivalence(unrolled, t2, 5, 4).passed);
  EXPECT_TRUE(equal(unrolled, t2));
}

TEST(LoopCost, FormulaAndDeltas) {
  auto k = doitgen();
  const double n = 64;
  double loops = n + n * n + n * n * n + n * n * n * n + n * n * n;
  double stmts = n * n * n + n * n * n * n + n * n * n;
  double strided = n * n * n * n;  // C4[s, p] walks a column
  EXPECT_DOUBLE_EQ(locality_cost(k), loops + stmts + 4 * strided);
  EXPECT_DOUBLE_EQ(locality_cost(k, 0.0), loops + stmts);
  auto tiled = apply_schedule_command(k, cmd(kTileP));
  // the tiled copy loop adds 4 outer iterations per (r, q)
  EXPECT_DOUBLE_EQ(locality_cost(tiled) - locality_cost(k), 4 * n * n);
  EXPECT_DOUBLE_EQ(locality_cost(LoopNest{}), 0.0);
}

TEST(LoopCost, UnrollKeepsStrideTerm) {
  auto k = doitgen();
  auto tiled = apply_schedule_command(
      k, cmd(R"({"optimization": "tile", "arguments": {"line": "for s in seq(0, 64):", "tile_size": "16", "outer_name": "s_outer", "inner_name": "s_inner"}})"));
  auto unrolled = apply_schedule_command(tiled, cmd(R"({"optimization": "unroll", "arguments": {"line": "for s_outer in seq(0, 4):"}})"));
  auto stride = [](const LoopNest& x) { return locality_cost(x) - locality_cost(x, 0.0); };
  EXPECT_DOUBLE_EQ(stride(unrolled), stride(tiled));
  // the s_outer loop ran 4 times per p iteration
  EXPECT_DOUBLE_EQ(locality_cost(tiled) - locality_cost(unrolled), 4.0 * 64 * 64 * 64);
}

TEST(LoopSession, TranscriptReplay) {
  auto steps = nlohmann::json::parse(read_file(asset_dir() / "schedule" / "doitgen_transcript.json"));
  ScheduleSession s(doitgen(), {5, 11, 4.0});
  for (const auto& j : steps) s.apply(parse_command(j));
  const auto& t = s.transcript();
  ASSERT_EQ(t.size(), 3u);
  EXPECT_FALSE(t[0].ok);
  EXPECT_NE(t[0].result.find("expected the body of the outer loop to be a single loop"), std::string::npos);
  EXPECT_TRUE(t[1].ok);
  EXPECT_EQ(t[1].equivalence, "pass");
  EXPECT_FALSE(t[2].ok);
  EXPECT_TRUE(equal(s.kernel(), load_kernel(asset_dir() / "schedule" / "doitgen_tiled.exo")));
  auto j = transcript_json(t);
  EXPECT_EQ(j[1]["result"], "ok");
  EXPECT_EQ(j[1]["command"]["arguments"]["tile_size"], "16");
  EXPECT_DOUBLE_EQ(j[1]["cost"].get<double>(), locality_cost(s.kernel()));
}

TEST(LoopSession, ScaleCommand) {
  auto c = scale_command(cmd(kTileP), 8);
  EXPECT_EQ(c.line, "for p in seq(0, 8): #1");
  EXPECT_EQ(c.tile_size, 2);
  EXPECT_EQ(reduction_factor(doitgen()), 8);
}

namespace {

class ScriptedBackend : public llm::Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string id() const override { return "scripted"; }
  std::vector<llm::Completion> complete(const prompts::Prompt& p, const llm::GenerationParams&) override {
    prompts_.push_back(p);
    return {{replies_.at(prompts_.size() - 1), id(), false, std::nullopt}};
  }
  std::vector<prompts::Prompt> prompts_;

 private:
  std::vector<std::string> replies_;
};

}  // namespace

TEST(LoopSession, LlmConversation) {
  ScriptedBackend b({
      "APPLY: {\"optimization\": \"reorder\", \"arguments\": {\"line\": \"for p in seq(0, 64): #1\"}}",
      "APPLY: {\"optimization\": \"tile\", \"arguments\": {\"line\": \"for p in seq(0, 64): #1\", \"tile_size\": \"16\", "
      "\"outer_name\": \"p_outer\", \"inner_name\": \"p_inner\"}}",
      "I am done.",
  });
  auto t = run_llm_session(doitgen(), b, 5, {});
  ASSERT_EQ(t.size(), 2u);
  ASSERT_EQ(b.prompts_.size(), 3u);
  const auto& first = b.prompts_[0].messages.back().text;
  EXPECT_NE(first.find("for p in seq(0, 64):"), std::string::npos);
  EXPECT_NE(first.find(cost_line(locality_cost(doitgen()))), std::string::npos);
  EXPECT_NE(first.find("APPLY:"), std::string::npos);
  const auto& err = b.prompts_[1].messages.back().text;
  EXPECT_EQ(err.rfind("An error occurred while applying the optimization:", 0), 0u);
  const auto& ok = b.prompts_[2].messages.back().text;
  EXPECT_NE(ok.find("I have applied the optimization."), std::string::npos);
  EXPECT_NE(ok.find("p_inner + 16 * p_outer"), std::string::npos);
}
