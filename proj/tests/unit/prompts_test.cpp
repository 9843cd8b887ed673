#include <gtest/gtest.h>

#include "talift/prompts.hpp"
#include "test_support.hpp"

using namespace talift;
using namespace talift::prompts;

namespace {

const kernels::KernelSpec& kernel(std::string_view name) {
  return kernels::find_kernel(test_support::all_kernels(), name);
}

PromptSpec translate(std::string_view k, int shots) {
  PromptSpec s;
  s.kernel = kernel(k);
  s.shots = shots;
  return s;
}

bool is_subsequence(std::string_view small, std::string_view big) {
  std::size_t j = 0;
  for (char c : big) {
    if (j < small.size() && small[j] == c) ++j;
  }
  return j == small.size();
}

bool contains(const Prompt& p, std::string_view needle) { return p.flat_text().find(needle) != std::string::npos; }

}  // namespace

TEST(Translate, ZeroShotHasIsaAndNoExample) {
  auto p = build_translation_prompt(translate("gv2", 0));
  EXPECT_TRUE(contains(p, "config_ex"));
  EXPECT_TRUE(contains(p, "Example 1:\n#test function"));
  EXPECT_FALSE(contains(p, "Example 2:"));
  for (const auto& ex : default_assets().examples) {
    EXPECT_FALSE(contains(p, ex.annotated));
    EXPECT_FALSE(contains(p, ex.stripped));
  }
}

TEST(Translate, OneShotEmbedsAnnotatedExampleAndTarget) {
  auto p = build_translation_prompt(translate("gv2", 1));
  const auto& ex = default_assets().examples.front();
  EXPECT_EQ(ex.kernel, "gv1");
  EXPECT_TRUE(contains(p, ex.annotated));
  EXPECT_NE(ex.annotated.find("//"), std::string::npos);
  EXPECT_TRUE(contains(p, "tiled_matmul_outer_eigen(AmBKt, p, AmBKt_p, 12, 12, 1, false, false);"));
  EXPECT_TRUE(contains(p, "Example 2:\n#test function"));
}

TEST(Translate, TwoShotUsesMatvecThenBiasExample) {
  auto p = build_translation_prompt(translate("gm3", 2));
  const auto& a = default_assets();
  auto first = p.flat_text().find(a.examples[0].annotated);
  auto second = p.flat_text().find(a.examples[1].annotated);
  ASSERT_NE(first, std::string::npos);
  ASSERT_NE(second, std::string::npos);
  EXPECT_LT(first, second);
  EXPECT_EQ(a.examples[1].kernel, "gm2");
  EXPECT_TRUE(contains(p, "tiled_matmul_outer_eigen_bias(BPA, Kt, Q, APBK_Q, 12, 4, 12, true, false, true);"));
}

TEST(Translate, NoIsaIsStrictSubsequence) {
  for (int shots = 0; shots <= 2; ++shots) {
    auto spec = translate("gm1", shots);
    auto with = build_translation_prompt(spec);
    spec.include_isa = false;
    auto without = build_translation_prompt(spec);
    EXPECT_LT(without.flat_text().size(), with.flat_text().size());
    EXPECT_TRUE(is_subsequence(without.flat_text(), with.flat_text()));
    EXPECT_FALSE(contains(without, default_assets().isa));
    // removing the ISA block recovers exactly the no-ISA text
    std::string text = with.flat_text();
    text.erase(text.find(default_assets().isa), default_assets().isa.size() + 2);
    EXPECT_EQ(text, without.flat_text());
  }
}

TEST(Translate, StrippedExamplesMatchStripFunction) {
  for (const auto& ex : default_assets().examples) {
    EXPECT_EQ(strip_comments(ex.annotated), ex.stripped) << ex.name;
    auto code_start = ex.stripped.find("```");
    ASSERT_NE(code_start, std::string::npos);
    EXPECT_EQ(ex.stripped.find("//", code_start), std::string::npos) << ex.name;
  }
  auto spec = translate("gv2", 2);
  spec.nl_annotated = false;
  auto p = build_translation_prompt(spec);
  EXPECT_TRUE(contains(p, default_assets().examples[1].stripped));
  EXPECT_FALSE(contains(p, default_assets().examples[1].annotated));
}

TEST(Translate, StripKeepsCodeAndDropsComments) {
  std::string in = "intro // kept\n```\n// gone\nx = 1; // tail\n  // gone too\ny = 2;\n```";
  EXPECT_EQ(strip_comments(in), "intro // kept\n```\nx = 1;\ny = 2;\n```");
}

TEST(Translate, ExamplesPositionFlipsSectionOrder) {
  auto spec = translate("gv3", 1);
  auto after = build_translation_prompt(spec);
  spec.examples_position = ExamplesPosition::BeforeInstructions;
  auto before = build_translation_prompt(spec);
  const auto& a = default_assets();
  auto order = [&](const Prompt& p) {
    auto t = p.flat_text();
    return t.find(a.examples[0].annotated) < t.find(a.translate_task);
  };
  EXPECT_FALSE(order(after));
  EXPECT_TRUE(order(before));
  EXPECT_NE(after.fingerprint, before.fingerprint);
}

TEST(Translate, SourceStyles) {
  auto spec = translate("gm1", 1);
  const auto& a = default_assets();
  spec.source_style = SourceStyle::NlOnly;
  auto nl = build_translation_prompt(spec);
  spec.source_style = SourceStyle::CodeOnly;
  auto code = build_translation_prompt(spec);
  spec.source_style = SourceStyle::Both;
  auto both = build_translation_prompt(spec);
  EXPECT_TRUE(contains(nl, a.source_nl));
  EXPECT_FALSE(contains(nl, a.source_code));
  EXPECT_TRUE(contains(code, a.source_code));
  EXPECT_TRUE(contains(both, a.source_nl));
  EXPECT_GT(both.flat_text().size(), nl.flat_text().size());
}

TEST(Translate, RolesAndDeterminism) {
  auto p = build_translation_prompt(translate("gm5", 2));
  ASSERT_EQ(p.messages.size(), 2u);
  EXPECT_EQ(p.messages[0].role, Role::System);
  EXPECT_EQ(p.messages[1].role, Role::User);
  EXPECT_EQ(p, build_translation_prompt(translate("gm5", 2)));
  EXPECT_EQ(p.fingerprint, fingerprint_of(p.messages));
  EXPECT_EQ(p.fingerprint.size(), 64u);
  EXPECT_NE(p.fingerprint, build_translation_prompt(translate("gm5", 1)).fingerprint);
}

TEST(Translate, MissingExample) {
  auto spec = translate("gm1", 2);
  spec.examples = {"matvec"};
  try {
    build_translation_prompt(spec);
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.code(), PromptErrc::MissingExample);
  }
  spec.examples = {"nope", "matvec"};
  EXPECT_THROW(build_translation_prompt(spec), PromptError);
  spec.examples = {"matmat", "matvec"};
  EXPECT_TRUE(contains(build_translation_prompt(spec), default_assets().example("matmat").annotated));
}

TEST(Translate, DescribeKernel) {
  EXPECT_EQ(describe_kernel(kernel("gv1")),
            "Multiplication of 4x12 matrix Bdyn, transposed, and 12x1 vector p, not transposed. The matrix and "
            "vector are both stored in dram. The result is stored in the 4x1 vector B_p. Systolic array size is "
            "4x4 and each element is 4bytes.");
  auto d = describe_kernel(kernel("gm7"));
  EXPECT_NE(d.find("minus 12x12 bias matrix Adyn"), std::string::npos);
  EXPECT_NE(d.find("4x12 matrix KinfT, transposed"), std::string::npos);
}

TEST(Optimize, Heuristics) {
  const auto& a = default_assets();
  ASSERT_EQ(a.default_heuristics.size(), 4u);
  auto with = build_block_optimize_prompt("mvin(A, 0, 4, 4);", a.isa, a.default_heuristics);
  for (const auto& h : a.default_heuristics) EXPECT_TRUE(contains(with, h));
  EXPECT_TRUE(contains(with, "1. "));
  EXPECT_TRUE(contains(with, "4. "));
  EXPECT_TRUE(contains(with, "mvin(A, 0, 4, 4);"));
  EXPECT_TRUE(contains(with, a.isa));
  auto without = build_block_optimize_prompt("mvin(A, 0, 4, 4);", a.isa, {});
  EXPECT_FALSE(contains(without, "heuristics"));
  for (const auto& h : a.default_heuristics) EXPECT_FALSE(contains(without, h));
  EXPECT_EQ(with, build_block_optimize_prompt("mvin(A, 0, 4, 4);", a.isa, a.default_heuristics));
  auto fb = build_block_optimize_prompt("x", a.isa, {}, "estimated cost: 3\n");
  EXPECT_TRUE(contains(fb, "estimated cost: 3"));
}

TEST(Reorder, BlockLabels) {
  const auto& a = default_assets();
  auto one = build_reorder_prompt({"fence();"}, a.isa);
  EXPECT_TRUE(contains(one, "// Block 0\nfence();"));
  EXPECT_FALSE(contains(one, "Block 1"));
  auto three = build_reorder_prompt({"a", "b", "c"}, a.isa);
  for (const char* l : {"// Block 0\na", "// Block 1\nb", "// Block 2\nc"}) EXPECT_TRUE(contains(three, l));
  EXPECT_THROW(build_reorder_prompt({}, a.isa), PromptError);
}

TEST(Repair, ConstantSetsAndMarks) {
  auto [p1, p2] = build_repair_prompts("mvin(A, 0, 4, 4);", {0, 1, 3, 4, 12});
  EXPECT_TRUE(contains(p1, "<CONST>"));
  EXPECT_TRUE(contains(p2, "{0, 1, 3, 4, 12}"));
  EXPECT_EQ(p2.messages.size(), p1.messages.size() + 2);
  EXPECT_EQ(p2.messages[p1.messages.size()].role, Role::Assistant);
  auto [q1, q2] = build_repair_prompts("x", {7}, std::string("mvin(A, <CONST>, 4, 4);"));
  EXPECT_TRUE(contains(q2, "{7}"));
  EXPECT_TRUE(contains(q2, "mvin(A, <CONST>, 4, 4);"));
  try {
    build_repair_prompts("x", {});
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.code(), PromptErrc::EmptyConstantSet);
  }
  EXPECT_THROW(build_repair_prompts("  \n", {1}), PromptError);
  auto ctx = build_translation_prompt(translate("gv2", 1));
  auto [c1, c2] = build_repair_prompts("x", {1}, std::nullopt, &ctx);
  EXPECT_EQ(c1.messages.front(), ctx.messages.front());
  EXPECT_EQ(c1.messages.size(), ctx.messages.size() + 2);
}

TEST(Dispatch, BuildPromptByTask) {
  PromptSpec s = translate("gv2", 1);
  EXPECT_EQ(build_prompt(s), build_translation_prompt(s));
  s.task = Task::RepairFill;
  s.candidate = "x";
  EXPECT_THROW(build_prompt(s), PromptError);
  s.constants = {1, 2};
  EXPECT_TRUE(contains(build_prompt(s), "{1, 2}"));
  s.task = Task::OptimizeBlock;
  EXPECT_TRUE(contains(build_prompt(s), default_assets().default_heuristics.front()));
}

TEST(Bounds, EveryPromptFamilyFitsIn32KiB) {
  constexpr std::size_t kLimit = 32 * 1024;
  const auto& a = default_assets();
  for (const auto& k : test_support::all_kernels()) {
    for (int shots = 0; shots <= 2; ++shots) {
      for (bool ann : {true, false}) {
        for (auto style : {SourceStyle::NlOnly, SourceStyle::CodeOnly, SourceStyle::Both}) {
          for (auto pos : {ExamplesPosition::BeforeInstructions, ExamplesPosition::AfterInstructions}) {
            PromptSpec s = translate(k.name, shots);
            s.nl_annotated = ann;
            s.source_style = style;
            s.examples_position = pos;
            auto p = build_translation_prompt(s);
            EXPECT_LE(p.flat_text().size(), kLimit) << k.name;
            auto [r1, r2] = build_repair_prompts(k.golden, {0, 1, 3, 4, 12}, std::nullopt, &p);
            EXPECT_LE(r2.flat_text().size(), kLimit) << k.name;
          }
        }
      }
    }
    EXPECT_LE(build_block_optimize_prompt(k.golden, a.isa, a.default_heuristics, "estimated cost: 1")
                  .flat_text()
                  .size(),
              kLimit);
    EXPECT_LE(build_reorder_prompt({k.golden}, a.isa).flat_text().size(), kLimit);
  }
}
