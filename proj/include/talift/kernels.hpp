#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "talift/isa.hpp"
#include "talift/matrix.hpp"
#include "talift/simulator.hpp"

namespace talift::kernels {

enum class Op : std::uint8_t { Matmul, MatmulBias };

struct KernelSpec {
  std::string name;
  Op op = Op::Matmul;
  std::uint32_t i = 0, k = 0, j = 0;
  bool transpose_a = false;
  bool transpose_b = false;
  bool sub = false;
  std::string a, b, c;
  std::optional<std::string> d;
  std::string description;
  /// Golden ISA program text, if the fixture ships one.
  std::string golden;

  /// Storage shapes follow the transpose flags: A is k x i when transposed.
  isa::BufferTable buffer_table() const;
  bool is_matvec() const { return j == 1; }
};

/// Throws std::invalid_argument (ShapeMismatch) when shapes disagree with the flags.
Matrix reference_matmul(const Matrix& a, const Matrix& b, std::uint32_t i, std::uint32_t k,
                        std::uint32_t j, bool ta, bool tb);
Matrix reference_matmul_bias(const Matrix& a, const Matrix& b, const Matrix& d, std::uint32_t i,
                             std::uint32_t k, std::uint32_t j, bool ta, bool tb, bool sub);

struct TestCase {
  std::map<std::string, Matrix> inputs;
  Matrix expected;
  std::uint64_t seed = 0;
};

Matrix reference(const KernelSpec& spec, const std::map<std::string, Matrix>& inputs);

std::vector<TestCase> generate_testcases(const KernelSpec& spec, std::uint64_t seed, int count);

/// DRAM images bound for a run. The ISA has no negation, so a subtracted bias
/// is staged negated.
std::map<std::string, Matrix> stage_inputs(const KernelSpec& spec, const TestCase& tc);

enum class FailureKind : std::uint8_t { None, ParseError, ExecError, WrongResult };

std::string_view failure_name(FailureKind f);

struct CaseOutcome {
  bool passed = false;
  std::string detail;
};

struct Verdict {
  bool passed = false;
  FailureKind failure = FailureKind::None;
  std::string message;
  // ExecError / ParseError details
  std::optional<std::size_t> instr_index;
  std::string error_kind;
  // WrongResult details
  std::size_t mismatch_row = 0, mismatch_col = 0;
  float got = 0.0f, want = 0.0f;
  std::vector<CaseOutcome> cases;
};

struct VerifyOptions {
  sim::MachineConfig machine;
  /// Stop at the first failing case.
  bool short_circuit = false;
};

Verdict verify_program(const isa::Program& p, const KernelSpec& spec,
                       const std::vector<TestCase>& cases, const VerifyOptions& opts = {});

/// Parses `text` with the spec's buffer table and verifies it. Parse failures
/// become a ParseError verdict.
Verdict verify_text(std::string_view text, const KernelSpec& spec,
                    const std::vector<TestCase>& cases, const VerifyOptions& opts = {});

KernelSpec load_kernel(const std::filesystem::path& json_path);

/// Loads every kernel fixture in `dir` (default: assets/kernels), sorted by name.
std::vector<KernelSpec> load_kernels(const std::filesystem::path& dir);
std::vector<KernelSpec> load_kernels();

const KernelSpec& find_kernel(const std::vector<KernelSpec>& all, std::string_view name);

}  // namespace talift::kernels
