#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "talift/repair.hpp"
#include "test_support.hpp"

using namespace talift;
using namespace talift::repair;

namespace {

const kernels::KernelSpec& kernel(std::string_view n) { return kernels::find_kernel(test_support::all_kernels(), n); }

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

// Scripted model: returns queued replies in order.
class ScriptedBackend : public llm::Backend {
 public:
  explicit ScriptedBackend(std::vector<std::vector<std::string>> replies) : replies_(std::move(replies)) {}
  std::string id() const override { return "scripted"; }
  std::vector<llm::Completion> complete(const prompts::Prompt& p, const llm::GenerationParams& params) override {
    prompts_.push_back(p);
    auto texts = replies_.at(calls_++);
    std::vector<llm::Completion> out;
    for (int i = 0; i < params.n_samples; ++i) out.push_back({texts.at(i), id(), false, std::nullopt});
    return out;
  }
  std::size_t calls_ = 0;
  std::vector<prompts::Prompt> prompts_;

 private:
  std::vector<std::vector<std::string>> replies_;
};

}  // namespace

TEST(Holes, ConstTokensInOrder) {
  auto t = extract_holes("mvin(A, <CONST>, 4, 4);\nmvin(B, 8, <CONST>, 4);");
  ASSERT_EQ(t.holes.size(), 2u);
  EXPECT_EQ(t.holes[0].id, "h0");
  EXPECT_EQ(t.holes[1].id, "h1");
  EXPECT_EQ(t.holes[1].line, 2u);
  EXPECT_EQ(t.holes[0].column, 9u);
  EXPECT_EQ(t.fill({7, 9}), "mvin(A, 7, 4, 4);\nmvin(B, 8, 9, 4);");
  EXPECT_THROW(t.fill({1}), std::invalid_argument);
}

TEST(Holes, UnchangedCodeHasNoHoles) {
  const auto& g = kernel("gm6").golden;
  try {
    extract_holes(g, g);
    FAIL();
  } catch (const RepairError& e) {
    EXPECT_EQ(e.code(), RepairError::Code::NoHolesFound);
  }
}

TEST(Holes, NamedDeclarationAgainstOriginal) {
  std::string original = "static uint32_t X = 0;\nmvin(A, X, 4, 4);";
  std::string marked = "static uint32_t X = 0;\nstatic uint32_t K = 4;\nmvin(A, X, K, 4);";
  auto t = extract_holes(marked, original);
  ASSERT_EQ(t.holes.size(), 1u);
  EXPECT_EQ(t.holes[0].id, "K");
  EXPECT_TRUE(t.holes[0].named);
  EXPECT_EQ(t.fill({3}), "static uint32_t X = 0;\nstatic uint32_t K = 3;\nmvin(A, X, K, 4);");
  // a declaration nobody uses is not a hole
  EXPECT_THROW(extract_holes("static uint32_t Z = 1;\n" + original, original), RepairError);
}

TEST(Enumerate, OrderAndCounts) {
  HoleTemplate one = extract_holes("mvin(A, <CONST>, 4, 4);");
  isa::BufferTable bt{{"A", 4, 4, isa::BufferRole::Input}};
  FillEnumerator e(one, {0, 1}, 100, bt);
  auto a = e.next();
  auto b = e.next();
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->values, std::vector<std::int64_t>{0});
  EXPECT_EQ(b->values, std::vector<std::int64_t>{1});
  EXPECT_FALSE(e.next());
  EXPECT_FALSE(e.cap_hit());

  auto two = extract_holes("mvin(A, <CONST>, 4, 4);\nmvin(A, <CONST>, 4, 4);");
  FillEnumerator e2(two, default_constants(), 10000, bt);
  std::vector<std::vector<std::int64_t>> seen;
  while (auto f = e2.next()) seen.push_back(f->values);
  EXPECT_EQ(seen.size(), 25u);
  EXPECT_EQ(e2.total(), 25u);
  EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end(), [](const auto& x, const auto& y) {
    auto rank = [](std::int64_t v) { return std::find(default_constants().begin(), default_constants().end(), v) - default_constants().begin(); };
    return std::make_pair(rank(x[0]), rank(x[1])) < std::make_pair(rank(y[0]), rank(y[1]));
  }));
  EXPECT_EQ(seen.front(), (std::vector<std::int64_t>{0, 0}));
  EXPECT_EQ(seen[1], (std::vector<std::int64_t>{0, 1}));
  EXPECT_EQ(seen.back(), (std::vector<std::int64_t>{12, 12}));
}

TEST(Enumerate, CapAndUnparseable) {
  auto five = extract_holes("mvin(A, <CONST>, <CONST>, <CONST>);\nfence(<CONST>);<CONST>;");
  FillEnumerator e(five, default_constants(), 100, {{"A", 4, 4, isa::BufferRole::Input}});
  std::size_t yielded = 0;
  while (e.next()) ++yielded;
  EXPECT_EQ(e.tried(), 100u);
  EXPECT_TRUE(e.cap_hit());
  EXPECT_EQ(e.total(), 3125u);
  // fence takes no argument, so every fill fails to parse
  EXPECT_EQ(yielded, 0u);
  EXPECT_EQ(e.unparseable(), 100u);
  EXPECT_THROW(FillEnumerator(five, {}, 10, {}), RepairError);
}

TEST(Repair, PerturbedGoldenIsRepaired) {
  const auto& k = kernel("gm6");
  auto cases = kernels::generate_testcases(k, 21, 4);
  auto broken = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * 3");
  ASSERT_FALSE(kernels::verify_text(broken, k, cases).passed);
  auto marked = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * <CONST>");
  auto r = repair_template(extract_holes(marked, broken), k, cases, default_constants());
  ASSERT_EQ(r.outcome, Outcome::Repaired) << r.reason;
  EXPECT_EQ(r.assignment, (std::map<std::string, std::int64_t>{{"h0", 4}}));
  EXPECT_EQ(r.stats.candidates_tried, 4u);
  EXPECT_TRUE(kernels::verify_text(r.program, k, cases).passed);
}

TEST(Repair, MissingValueExhausts) {
  const auto& k = kernel("gm6");
  auto cases = kernels::generate_testcases(k, 21, 2);
  auto marked = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * <CONST> + jb * <CONST>");
  auto r = repair_template(extract_holes(marked), k, cases, {0, 1, 3});
  EXPECT_EQ(r.outcome, Outcome::Exhausted);
  EXPECT_EQ(r.stats.candidates_tried, 9u);
  EXPECT_FALSE(r.stats.cap_hit);
}

TEST(Repair, TooManyHolesAborts) {
  const auto& k = kernel("gm6");
  RepairOptions o;
  o.max_holes = 1;
  auto t = extract_holes("<CONST> <CONST>");
  EXPECT_EQ(repair_template(t, k, {}, {1}, o).outcome, Outcome::Aborted);
}

TEST(Repair, ParallelMatchesSequential) {
  const auto& k = kernel("gv2");
  auto cases = kernels::generate_testcases(k, 5, 3);
  auto g = k.golden;
  // two holes; only one assignment restores the program
  std::regex first_mvin(R"(mvin\(([^,]+), ([^,]+), 4, 4\))");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(g, m, first_mvin));
  auto marked = g.substr(0, m.position(0)) + "mvin(" + m[1].str() + ", " + m[2].str() + ", <CONST>, <CONST>)" +
                g.substr(m.position(0) + m.length(0));
  auto t = extract_holes(marked);
  auto seq = repair_template(t, k, cases, default_constants());
  RepairOptions par;
  par.jobs = 4;
  auto p = repair_template(t, k, cases, default_constants(), par);
  ASSERT_EQ(seq.outcome, Outcome::Repaired);
  EXPECT_EQ(seq.assignment, p.assignment);
  EXPECT_EQ(seq.stats.candidates_tried, p.stats.candidates_tried);
  EXPECT_EQ(seq.assignment.at("h0"), 4);
  EXPECT_EQ(seq.assignment.at("h1"), 4);
}

TEST(Repair, CompletenessOverGoldenSites) {
  // each shipped golden, with one "4, 4)" site knocked out, is recovered
  std::mt19937 rng(8);
  for (const auto& k : test_support::all_kernels()) {
    auto cases = kernels::generate_testcases(k, 2, 3);
    std::vector<std::size_t> sites;
    for (auto pos = k.golden.find("4, 4)"); pos != std::string::npos; pos = k.golden.find("4, 4)", pos + 1))
      sites.push_back(pos);
    if (sites.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, sites.size() - 1);
    auto site = sites[pick(rng)];
    auto marked = k.golden.substr(0, site) + "<CONST>, <CONST>)" + k.golden.substr(site + 5);
    auto r = repair_template(extract_holes(marked), k, cases, default_constants());
    ASSERT_EQ(r.outcome, Outcome::Repaired) << k.name;
    EXPECT_TRUE(kernels::verify_text(r.program, k, cases).passed) << k.name;
  }
}

TEST(Repair, PassingCandidateReturnsImmediately) {
  const auto& k = kernel("gm1");
  auto cases = kernels::generate_testcases(k, 1, 2);
  auto r = repair::repair(k.golden, k, cases, default_constants(), Mode::Enumerate, nullptr);
  EXPECT_EQ(r.outcome, Outcome::Repaired);
  EXPECT_EQ(r.stats.candidates_tried, 0u);
  EXPECT_TRUE(r.assignment.empty());
}

TEST(Repair, LlmMarksThenEnumerates) {
  const auto& k = kernel("gm6");
  auto cases = kernels::generate_testcases(k, 21, 3);
  auto broken = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * 3");
  auto marked = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * <CONST>");
  ScriptedBackend b({{"```\n" + marked + "\n```"}, {"```\n" + broken + "\n```"}});
  auto r = repair::repair(broken, k, cases, default_constants(), Mode::LlmThenEnumerate, &b);
  ASSERT_EQ(r.outcome, Outcome::Repaired) << r.reason;
  EXPECT_EQ(r.assignment.at("h0"), 4);
  EXPECT_EQ(b.calls_, 2u);
  EXPECT_NE(b.prompts_[0].flat_text().find("<CONST>"), std::string::npos);
  EXPECT_NE(b.prompts_[1].flat_text().find("{0, 1, 3, 4, 12}"), std::string::npos);
}

TEST(Repair, LlmFillWins) {
  const auto& k = kernel("gm6");
  auto cases = kernels::generate_testcases(k, 21, 3);
  auto broken = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * 3");
  auto marked = replace_once(k.golden, "BPA + kb * 48 + jb * 4", "BPA + kb * 48 + jb * <CONST>");
  ScriptedBackend b({{marked}, {"```\n" + k.golden + "\n```"}});
  auto r = repair::repair(broken, k, cases, default_constants(), Mode::Llm, &b);
  EXPECT_EQ(r.outcome, Outcome::Repaired);
  EXPECT_EQ(r.stats.candidates_tried, 1u);
  ScriptedBackend bad({{marked}, {"nonsense"}});
  EXPECT_EQ(repair::repair(broken, k, cases, default_constants(), Mode::Llm, &bad).outcome, Outcome::Exhausted);
  ScriptedBackend nomark({{broken}});
  EXPECT_EQ(repair::repair(broken, k, cases, default_constants(), Mode::Enumerate, &nomark).outcome, Outcome::Aborted);
}

TEST(Repair, ModeNames) {
  EXPECT_EQ(parse_mode("enumerate"), Mode::Enumerate);
  EXPECT_EQ(parse_mode("llm_then_enumerate"), Mode::LlmThenEnumerate);
  EXPECT_THROW(parse_mode("guess"), std::invalid_argument);
}
