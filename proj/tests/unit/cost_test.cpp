#include <gtest/gtest.h>

#include <fmt/format.h>

#include <random>

#include "talift/cost_model.hpp"
#include "talift/kernels.hpp"
#include "test_support.hpp"

using namespace talift;

namespace {

isa::Program golden(const kernels::KernelSpec& k) { return isa::parse_program(k.golden, k.buffer_table()); }

// independent restatement of the per-instruction formula
double formula(const isa::Instruction& ins) {
  return std::visit(
      [](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, isa::Mvin> || std::is_same_v<T, isa::Mvout>) {
          return 1.0 + x.cols * x.rows;  // 0.25 * 4 bytes
        } else if constexpr (std::is_same_v<T, isa::Preload> || std::is_same_v<T, isa::PreloadZeros>) {
          return 1.0 + 4.0;
        } else if constexpr (std::is_same_v<T, isa::Compute>) {
          return 1.0 + x.a_rows;
        } else {
          return 1.0;
        }
      },
      ins);
}

}  // namespace

TEST(Cost, EmptyProgram) {
  auto c = cost::program_cost(isa::Program{});
  EXPECT_EQ(c.total, 0.0);
  EXPECT_EQ(c.instructions(), 0u);
  EXPECT_EQ(c.mvin + c.mvout + c.preload + c.compute + c.config + c.fence, 0u);
}

TEST(Cost, SingleFence) {
  isa::Program p;
  p.instructions.push_back(isa::Fence{});
  auto c = cost::program_cost(p);
  EXPECT_EQ(c.total, 1.0);
  EXPECT_EQ(c.fence, 1u);
}

TEST(Cost, WideMvin) {
  isa::Program p;
  p.buffers.push_back({"A", 4, 12, isa::BufferRole::Input});
  p.instructions.push_back(isa::Mvin{0, {"A", 0}, isa::LocalAddr{0}, 12, 4});
  auto c = cost::program_cost(p);
  EXPECT_DOUBLE_EQ(c.total, 49.0);
  EXPECT_EQ(c.dram_bytes_in, 4u * 12 * 4);
}

TEST(Cost, RejectsInvalidProgram) {
  isa::Program p;
  p.buffers.push_back({"A", 8, 4, isa::BufferRole::Input});
  p.instructions.push_back(isa::Mvin{0, {"A", 0}, isa::LocalAddr{0}, 4, 8});
  EXPECT_THROW(cost::program_cost(p), isa::IsaError);
}

TEST(Cost, GoldensMatchFormulaAndAreAdditive) {
  for (const auto& k : test_support::all_kernels()) {
    auto p = golden(k);
    auto c = cost::program_cost(p);
    double sum = 0;
    for (std::size_t n = 0; n < p.instructions.size(); ++n) {
      EXPECT_DOUBLE_EQ(c.per_instruction[n], formula(p.instructions[n])) << k.name << " #" << n;
      sum += c.per_instruction[n];
    }
    EXPECT_DOUBLE_EQ(c.total, sum) << k.name;

    auto doubled = p;
    doubled.instructions.insert(doubled.instructions.end(), p.instructions.begin(), p.instructions.end());
    EXPECT_DOUBLE_EQ(cost::program_cost(doubled).total, 2 * c.total) << k.name;
  }
}

TEST(Cost, RemovingInstructionsNeverIncreasesTotal) {
  std::mt19937 rng(17);
  for (const auto& k : test_support::all_kernels()) {
    auto p = golden(k);
    double total = cost::program_cost(p).total;
    for (int trial = 0; trial < 10 && !p.instructions.empty(); ++trial) {
      std::uniform_int_distribution<std::size_t> pick(0, p.instructions.size() - 1);
      p.instructions.erase(p.instructions.begin() + static_cast<std::ptrdiff_t>(pick(rng)));
      double next = cost::program_cost(p).total;
      EXPECT_LE(next, total) << k.name;
      total = next;
    }
  }
}

TEST(Cost, ByteCountersMatchSimulator) {
  for (const auto& k : test_support::all_kernels()) {
    auto p = golden(k);
    auto c = cost::program_cost(p);
    auto tc = kernels::generate_testcases(k, 3, 1).front();
    auto m = sim::create_machine({}, k.buffer_table(), kernels::stage_inputs(k, tc));
    sim::execute(m, p);
    EXPECT_EQ(c.dram_bytes_in, 4 * m.elements_in) << k.name;
    EXPECT_EQ(c.dram_bytes_out, 4 * m.elements_out) << k.name;
  }
}

TEST(Cost, CustomParams) {
  isa::Program p;
  p.instructions.push_back(isa::PreloadZeros{});
  cost::CostParams params;
  params.pipeline_fill = 10;
  params.issue_cost = 2;
  EXPECT_DOUBLE_EQ(cost::program_cost(p, params).total, 12.0);
}

TEST(Feedback, BaselineDelta) {
  const auto& k = kernels::find_kernel(test_support::all_kernels(), "gm1");
  auto c = cost::program_cost(golden(k));
  auto plain = cost::render_feedback(c);
  EXPECT_EQ(plain.find("Δ"), std::string::npos);
  EXPECT_NE(plain.find("estimated cost:"), std::string::npos);
  EXPECT_NE(cost::render_feedback(c, c).find("Δtotal: +0\n"), std::string::npos);

  auto p = golden(k);
  p.instructions.pop_back();
  auto smaller = cost::program_cost(p);
  double diff = smaller.total - c.total;
  ASSERT_LT(diff, 0);
  EXPECT_NE(cost::render_feedback(smaller, c).find(fmt::format("Δtotal: {:+g}", diff)), std::string::npos);
  EXPECT_EQ(cost::render_feedback(c), cost::render_feedback(c));
}
