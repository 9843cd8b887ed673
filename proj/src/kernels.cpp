#include "talift/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "talift/util.hpp"

namespace talift::kernels {

using nlohmann::json;

isa::BufferTable KernelSpec::buffer_table() const {
  isa::BufferTable t;
  t.push_back({a, transpose_a ? k : i, transpose_a ? i : k, isa::BufferRole::Input});
  t.push_back({b, transpose_b ? j : k, transpose_b ? k : j, isa::BufferRole::Input});
  if (d) t.push_back({*d, i, j, isa::BufferRole::Bias});
  t.push_back({c, i, j, isa::BufferRole::Output});
  return t;
}

namespace {

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, std::string_view what) {
  if (m.rows != rows || m.cols != cols) {
    throw std::invalid_argument(fmt::format("ShapeMismatch: {} is {}x{}, expected {}x{}", what, m.rows,
                                            m.cols, rows, cols));
  }
}

}  // namespace

Matrix reference_matmul(const Matrix& a, const Matrix& b, std::uint32_t i, std::uint32_t k,
                        std::uint32_t j, bool ta, bool tb) {
  check_shape(a, ta ? k : i, ta ? i : k, "A");
  check_shape(b, tb ? j : k, tb ? k : j, "B");
  Matrix c(i, j);
  for (std::uint32_t ii = 0; ii < i; ++ii) {
    for (std::uint32_t jj = 0; jj < j; ++jj) {
      for (std::uint32_t kk = 0; kk < k; ++kk) {
        float ae = ta ? a(kk, ii) : a(ii, kk);
        float be = tb ? b(jj, kk) : b(kk, jj);
        c(ii, jj) += ae * be;
      }
    }
  }
  return c;
}

Matrix reference_matmul_bias(const Matrix& a, const Matrix& b, const Matrix& d, std::uint32_t i,
                             std::uint32_t k, std::uint32_t j, bool ta, bool tb, bool sub) {
  check_shape(d, i, j, "D");
  check_shape(a, ta ? k : i, ta ? i : k, "A");
  check_shape(b, tb ? j : k, tb ? k : j, "B");
  Matrix c(i, j);
  for (std::uint32_t ii = 0; ii < i; ++ii) {
    for (std::uint32_t jj = 0; jj < j; ++jj) {
      if (sub) {
        c(ii, jj) -= d(ii, jj);
      } else {
        c(ii, jj) += d(ii, jj);
      }
      for (std::uint32_t kk = 0; kk < k; ++kk) {
        float ae = ta ? a(kk, ii) : a(ii, kk);
        float be = tb ? b(jj, kk) : b(kk, jj);
        c(ii, jj) += ae * be;
      }
    }
  }
  return c;
}

Matrix reference(const KernelSpec& spec, const std::map<std::string, Matrix>& inputs) {
  auto get = [&](const std::string& n) -> const Matrix& {
    auto it = inputs.find(n);
    if (it == inputs.end()) throw std::invalid_argument(fmt::format("missing input {}", n));
    return it->second;
  };
  if (spec.op == Op::MatmulBias) {
    return reference_matmul_bias(get(spec.a), get(spec.b), get(*spec.d), spec.i, spec.k, spec.j,
                                 spec.transpose_a, spec.transpose_b, spec.sub);
  }
  return reference_matmul(get(spec.a), get(spec.b), spec.i, spec.k, spec.j, spec.transpose_a,
                          spec.transpose_b);
}

std::vector<TestCase> generate_testcases(const KernelSpec& spec, std::uint64_t seed, int count) {
  if (count < 1) throw std::invalid_argument("testcase count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<TestCase> out;
  for (int n = 0; n < count; ++n) {
    TestCase tc;
    tc.seed = seed + static_cast<std::uint64_t>(n);
    for (const auto& b : spec.buffer_table()) {
      if (b.role == isa::BufferRole::Output) continue;
      Matrix m(b.rows, b.cols);
      for (auto& v : m.data) v = static_cast<float>(uniform_int(rng, -8, 8));
      tc.inputs.emplace(b.name, std::move(m));
    }
    tc.expected = reference(spec, tc.inputs);
    out.push_back(std::move(tc));
  }
  return out;
}

std::map<std::string, Matrix> stage_inputs(const KernelSpec& spec, const TestCase& tc) {
  auto staged = tc.inputs;
  if (spec.op == Op::MatmulBias && spec.sub) {
    for (auto& v : staged.at(*spec.d).data) v = -v;
  }
  return staged;
}

std::string_view failure_name(FailureKind f) {
  switch (f) {
    case FailureKind::None: return "none";
    case FailureKind::ParseError: return "ParseError";
    case FailureKind::ExecError: return "ExecError";
    case FailureKind::WrongResult: return "WrongResult";
  }
  return "?";
}

namespace {

bool integral(float v) { return std::isfinite(v) && std::nearbyint(v) == v; }

bool all_integral(const TestCase& tc) {
  for (const auto& [_, m] : tc.inputs) {
    if (!std::all_of(m.data.begin(), m.data.end(), integral)) return false;
  }
  return true;
}

bool close(float got, float want, bool exact) {
  if (exact) return got == want;
  return std::fabs(got - want) <= 1e-4f * std::max(1.0f, std::fabs(want));
}

}  // namespace

Verdict verify_program(const isa::Program& p, const KernelSpec& spec,
                       const std::vector<TestCase>& cases, const VerifyOptions& opts) {
  Verdict v;
  v.passed = true;
  for (const auto& tc : cases) {
    CaseOutcome out;
    try {
      auto m = sim::create_machine(opts.machine, spec.buffer_table(), stage_inputs(spec, tc));
      sim::execute(m, p);
      Matrix got = sim::read_output(m, spec.c);
      bool exact = all_integral(tc);
      out.passed = true;
      for (std::size_t r = 0; r < got.rows && out.passed; ++r) {
        for (std::size_t c = 0; c < got.cols; ++c) {
          if (!close(got(r, c), tc.expected(r, c), exact)) {
            out.passed = false;
            out.detail = fmt::format("{}[{}][{}] = {}, expected {}", spec.c, r, c, got(r, c),
                                     tc.expected(r, c));
            if (v.passed) {
              v.failure = FailureKind::WrongResult;
              v.mismatch_row = r;
              v.mismatch_col = c;
              v.got = got(r, c);
              v.want = tc.expected(r, c);
              v.message = out.detail;
            }
            break;
          }
        }
      }
    } catch (const sim::SimError& e) {
      out.passed = false;
      out.detail = e.what();
      if (v.passed) {
        v.failure = FailureKind::ExecError;
        v.instr_index = e.instr_index();
        v.error_kind = std::string(sim::errc_name(e.code()));
        v.message = e.what();
      }
    }
    bool failed = !out.passed;
    v.cases.push_back(std::move(out));
    if (failed) {
      v.passed = false;
      if (opts.short_circuit) break;
    }
  }
  return v;
}

Verdict verify_text(std::string_view text, const KernelSpec& spec,
                    const std::vector<TestCase>& cases, const VerifyOptions& opts) {
  isa::Program p;
  try {
    p = isa::parse_program(text, spec.buffer_table());
  } catch (const isa::IsaError& e) {
    Verdict v;
    v.failure = FailureKind::ParseError;
    v.error_kind = std::string(isa::errc_name(e.code()));
    v.instr_index = e.instr_index();
    v.message = e.what();
    return v;
  }
  return verify_program(p, spec, cases, opts);
}

KernelSpec load_kernel(const std::filesystem::path& json_path) {
  json j = json::parse(read_file(json_path));
  KernelSpec s;
  s.name = j.at("name").get<std::string>();
  std::string op = j.at("op").get<std::string>();
  if (op == "matmul") {
    s.op = Op::Matmul;
  } else if (op == "matmul_bias") {
    s.op = Op::MatmulBias;
  } else {
    throw std::invalid_argument(fmt::format("{}: unknown op '{}'", json_path.string(), op));
  }
  s.i = j.at("i").get<std::uint32_t>();
  s.k = j.at("k").get<std::uint32_t>();
  s.j = j.at("j").get<std::uint32_t>();
  s.transpose_a = j.value("transpose_a", false);
  s.transpose_b = j.value("transpose_b", false);
  s.sub = j.value("sub", false);
  const json& ops = j.at("operands");
  s.a = ops.at("A").get<std::string>();
  s.b = ops.at("B").get<std::string>();
  s.c = ops.at("C").get<std::string>();
  if (ops.contains("D")) s.d = ops.at("D").get<std::string>();
  if ((s.op == Op::MatmulBias) != s.d.has_value()) {
    throw std::invalid_argument(fmt::format("{}: bias operand must be given exactly for matmul_bias",
                                            json_path.string()));
  }
  s.description = j.value("description", "");
  if (j.contains("golden")) {
    s.golden = read_file(json_path.parent_path() / j.at("golden").get<std::string>());
  }
  return s;
}

std::vector<KernelSpec> load_kernels(const std::filesystem::path& dir) {
  std::vector<KernelSpec> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") out.push_back(load_kernel(e.path()));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.name < y.name; });
  return out;
}

std::vector<KernelSpec> load_kernels() { return load_kernels(asset_dir() / "kernels"); }

const KernelSpec& find_kernel(const std::vector<KernelSpec>& all, std::string_view name) {
  for (const auto& k : all) {
    if (k.name == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown kernel '{}'", name));
}

}  // namespace talift::kernels
