#include <gtest/gtest.h>

#include "talift/kernels.hpp"
#include "test_support.hpp"

using namespace talift;

TEST(Reference, IdentityAndTranspose) {
  Matrix m(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(kernels::reference_matmul(Matrix::identity(2), m, 2, 2, 2, false, false), m);
  EXPECT_EQ(kernels::reference_matmul(m, Matrix::identity(2), 2, 2, 2, true, false), Matrix(2, 2, {1, 3, 2, 4}));
}

TEST(Reference, BiasTrivial) {
  Matrix d(3, 2, {1, -2, 3, 4, 5, 6});
  Matrix za(3, 4), zb(4, 2);
  EXPECT_EQ(kernels::reference_matmul_bias(za, zb, d, 3, 4, 2, false, false, false), d);
  Matrix neg = d;
  for (auto& v : neg.data) v = -v;
  EXPECT_EQ(kernels::reference_matmul_bias(za, zb, d, 3, 4, 2, false, false, true), neg);
}

TEST(Reference, ShapeMismatch) {
  EXPECT_THROW(kernels::reference_matmul(Matrix(2, 3), Matrix(3, 2), 2, 3, 2, true, false), std::invalid_argument);
}

TEST(Reference, AgreesWithNaiveOracle) {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> dim(1, 16), flag(0, 1);
  for (int n = 0; n < 100; ++n) {
    std::uint32_t i = dim(rng), k = dim(rng), j = dim(rng);
    bool ta = flag(rng), tb = flag(rng), sub = flag(rng);
    Matrix a = test_support::random_int_matrix(rng, ta ? k : i, ta ? i : k);
    Matrix b = test_support::random_int_matrix(rng, tb ? j : k, tb ? k : j);
    Matrix d = test_support::random_int_matrix(rng, i, j);
    Matrix want = test_support::naive_matmul(a, b, ta, tb);
    ASSERT_EQ(kernels::reference_matmul(a, b, i, k, j, ta, tb), want);
    for (std::size_t e = 0; e < want.data.size(); ++e) want.data[e] += sub ? -d.data[e] : d.data[e];
    ASSERT_EQ(kernels::reference_matmul_bias(a, b, d, i, k, j, ta, tb, sub), want);
  }
}

TEST(Testcases, DeterministicDistinctAndCorrect) {
  const auto& spec = kernels::find_kernel(test_support::all_kernels(), "gm3");
  auto a = kernels::generate_testcases(spec, 42, 3);
  auto b = kernels::generate_testcases(spec, 42, 3);
  ASSERT_EQ(a.size(), 3u);
  for (int n = 0; n < 3; ++n) {
    EXPECT_EQ(a[n].inputs, b[n].inputs);
    Matrix want = test_support::naive_matmul(a[n].inputs.at("BPA"), a[n].inputs.at("Kt"), true, false);
    for (std::size_t e = 0; e < want.data.size(); ++e) want.data[e] -= a[n].inputs.at("Q").data[e];
    EXPECT_EQ(a[n].expected, want);
    for (const auto& [_, m] : a[n].inputs)
      for (float v : m.data) EXPECT_TRUE(v >= -8 && v <= 8 && v == float(int(v)));
  }
  EXPECT_NE(a[0].inputs, a[1].inputs);
  EXPECT_NE(a[1].inputs, a[2].inputs);
  EXPECT_NE(kernels::generate_testcases(spec, 43, 1)[0].inputs, a[0].inputs);
  EXPECT_THROW(kernels::generate_testcases(spec, 1, 0), std::invalid_argument);
}

TEST(Fixtures, Inventory) {
  const auto& all = test_support::all_kernels();
  int mv = 0, mm = 0;
  bool largest_mv = false, largest_mm = false, repair_kernel = false;
  for (const auto& k : all) {
    (k.is_matvec() ? mv : mm)++;
    if (k.is_matvec() && k.i == 12 && k.k == 12) largest_mv = true;
    if (k.i == 36 && k.k == 36 && k.j == 12) largest_mm = true;
    if (k.i == 12 && k.k == 4 && k.j == 12 && k.transpose_a && k.op == kernels::Op::MatmulBias && k.sub)
      repair_kernel = true;
    EXPECT_FALSE(k.golden.empty()) << k.name;
  }
  EXPECT_EQ(mv, 4);
  EXPECT_EQ(mm, 7);
  EXPECT_TRUE(largest_mv && largest_mm && repair_kernel);
}

TEST(Verify, GoldenPasses) {
  for (const auto& spec : test_support::all_kernels()) {
    auto v = kernels::verify_text(spec.golden, spec, kernels::generate_testcases(spec, 7, 5));
    EXPECT_TRUE(v.passed) << spec.name << ": " << v.message;
  }
}

TEST(Verify, FailureKinds) {
  const auto& spec = kernels::find_kernel(test_support::all_kernels(), "gv1");
  auto cases = kernels::generate_testcases(spec, 7, 5);
  std::string no_mvout = spec.golden;
  no_mvout.replace(no_mvout.find("mvout(B_p, B_p_acc_addr, 1, 4);"), 31, "");
  auto v = kernels::verify_text(no_mvout, spec, cases);
  EXPECT_FALSE(v.passed);
  EXPECT_EQ(v.failure, kernels::FailureKind::WrongResult);

  std::string rows5 = spec.golden;
  rows5.replace(rows5.find("mvin2(p + 0x0, p_sp_addr, 1, 4)"), 31, "mvin2(p + 0x0, p_sp_addr, 1, 5)");
  v = kernels::verify_text(rows5, spec, cases);
  EXPECT_EQ(v.failure, kernels::FailureKind::ExecError);
  EXPECT_EQ(v.error_kind, "RowsExceedDim");

  v = kernels::verify_text("this is prose", spec, cases);
  EXPECT_EQ(v.failure, kernels::FailureKind::ParseError);

  kernels::VerifyOptions sc;
  sc.short_circuit = true;
  v = kernels::verify_text(no_mvout, spec, cases, sc);
  EXPECT_EQ(v.cases.size(), 1u);
}
