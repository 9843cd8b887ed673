#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "talift/cli.hpp"
#include "talift/cost_model.hpp"
#include "talift/eval.hpp"
#include "talift/kernels.hpp"
#include "talift/loop_sched.hpp"
#include "talift/optimizer.hpp"
#include "talift/prompts.hpp"
#include "talift/repair.hpp"
#include "talift/simulator.hpp"

namespace py = pybind11;
using namespace talift;

namespace {

const std::vector<kernels::KernelSpec>& all_kernels() {
  static const auto k = kernels::load_kernels();
  return k;
}

const kernels::KernelSpec& kernel(const std::string& name) { return kernels::find_kernel(all_kernels(), name); }

py::list rows_of(const Matrix& m) {
  py::list rows;
  for (std::size_t r = 0; r < m.rows; ++r) {
    py::list row;
    for (std::size_t c = 0; c < m.cols; ++c) row.append(m(r, c));
    rows.append(row);
  }
  return rows;
}

py::dict cost_dict(const cost::CostBreakdown& c) {
  py::dict d;
  d["total"] = c.total;
  d["mvin"] = c.mvin;
  d["mvout"] = c.mvout;
  d["preload"] = c.preload;
  d["compute"] = c.compute;
  d["config"] = c.config;
  d["instructions"] = c.instructions();
  return d;
}

py::dict verify(const std::string& program, const std::string& name, int n, std::uint64_t seed) {
  const auto& k = kernel(name);
  kernels::Verdict v;
  {
    py::gil_scoped_release release;
    v = kernels::verify_text(program, k, kernels::generate_testcases(k, seed, n));
  }
  py::dict d;
  d["passed"] = v.passed;
  d["failure"] = std::string(kernels::failure_name(v.failure));
  d["message"] = v.message;
  d["cases"] = v.cases.size();
  return d;
}

py::dict simulate(const std::string& program, const std::string& name, std::uint64_t seed) {
  const auto& k = kernel(name);
  auto p = isa::parse_program(program, k.buffer_table());
  auto tc = kernels::generate_testcases(k, seed, 1).at(0);
  auto m = sim::create_machine({}, k.buffer_table(), kernels::stage_inputs(k, tc));
  sim::execute(m, p);
  py::dict d;
  d["output"] = rows_of(sim::read_output(m, k.c));
  d["expected"] = rows_of(tc.expected);
  d["inputs"] = [&] {
    py::dict in;
    for (const auto& [buf, mat] : tc.inputs) in[py::str(buf)] = rows_of(mat);
    return in;
  }();
  d["cost"] = cost_dict(cost::program_cost(p));
  return d;
}

py::dict program_cost(const std::string& program, const std::string& name) {
  return cost_dict(cost::program_cost(isa::parse_program(program, kernel(name).buffer_table())));
}

py::dict translation_prompt(const std::string& name, int shots, bool include_isa, bool nl_annotated,
                            const std::string& source, const std::string& examples) {
  prompts::PromptSpec spec;
  spec.kernel = kernel(name);
  spec.shots = shots;
  spec.include_isa = include_isa;
  spec.nl_annotated = nl_annotated;
  if (source == "nl") spec.source_style = prompts::SourceStyle::NlOnly;
  else if (source == "code") spec.source_style = prompts::SourceStyle::CodeOnly;
  else if (source == "both") spec.source_style = prompts::SourceStyle::Both;
  else throw py::value_error("source must be nl, code or both");
  if (examples == "after") spec.examples_position = prompts::ExamplesPosition::AfterInstructions;
  else if (examples == "before") spec.examples_position = prompts::ExamplesPosition::BeforeInstructions;
  else throw py::value_error("examples must be before or after");
  auto p = prompts::build_translation_prompt(spec);
  py::list messages;
  for (const auto& m : p.messages) messages.append(py::make_tuple(std::string(prompts::role_name(m.role)), m.text));
  py::dict d;
  d["messages"] = messages;
  d["fingerprint"] = p.fingerprint;
  return d;
}

py::dict repair_marked(const std::string& marked, const std::string& name, const std::vector<std::int64_t>& constants,
                       int n, std::uint64_t seed) {
  const auto& k = kernel(name);
  auto r = repair::repair_template(repair::extract_holes(marked), k, kernels::generate_testcases(k, seed, n), constants);
  py::dict d;
  d["outcome"] = std::string(repair::outcome_name(r.outcome));
  d["program"] = r.program;
  d["assignment"] = r.assignment;
  d["candidates_tried"] = r.stats.candidates_tried;
  d["reason"] = r.reason;
  return d;
}

py::dict optimize(const std::string& program, const std::string& name, const std::string& mode, int n,
                  std::uint64_t seed) {
  const auto& k = kernel(name);
  auto p = isa::parse_program(program, k.buffer_table());
  auto r = opt::optimize_program(p, k, kernels::generate_testcases(k, seed, n), opt::parse_mode(mode));
  py::dict d;
  d["program"] = isa::render_program(r.program);
  d["changed"] = r.changed;
  d["before"] = cost_dict(r.before);
  d["after"] = cost_dict(r.after);
  d["order"] = r.plan.order;
  return d;
}

std::string apply_command(const std::string& kernel_text, const std::string& command_json) {
  auto k = sched::parse_kernel(kernel_text);
  auto c = sched::parse_command(nlohmann::json::parse(command_json));
  return sched::render_kernel(sched::apply_schedule_command(k, c));
}

py::dict equivalence(const std::string& a, const std::string& b, int trials, std::uint64_t seed) {
  auto v = sched::check_equivalence(sched::parse_kernel(a), sched::parse_kernel(b), trials, seed);
  py::dict d;
  d["passed"] = v.passed;
  d["trials"] = v.trials;
  d["failing_trial"] = v.failing_trial ? py::object(py::int_(*v.failing_trial)) : py::object(py::none());
  return d;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = cli::dispatch(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_talift, m) {
  m.doc() = "Tensor-accelerator translation workbench";

  py::register_exception<sched::ScheduleError>(m, "ScheduleError", PyExc_ValueError);
  py::register_exception<isa::IsaError>(m, "IsaError", PyExc_ValueError);
  py::register_exception<sim::SimError>(m, "SimError", PyExc_RuntimeError);

  m.def("kernels", [] {
    std::vector<std::string> names;
    for (const auto& k : all_kernels()) names.push_back(k.name);
    return names;
  });
  m.def("golden", [](const std::string& name) { return kernel(name).golden; }, py::arg("kernel"));
  m.def("verify", &verify, py::arg("program"), py::arg("kernel"), py::arg("n") = 20, py::arg("seed") = 0);
  m.def("simulate", &simulate, py::arg("program"), py::arg("kernel"), py::arg("seed") = 0);
  m.def("program_cost", &program_cost, py::arg("program"), py::arg("kernel"));
  m.def("pass_at_k", &eval::pass_at_k, py::arg("n"), py::arg("c"), py::arg("k"));
  m.def("translation_prompt", &translation_prompt, py::arg("kernel"), py::arg("shots") = 1, py::arg("include_isa") = true,
        py::arg("nl_annotated") = true, py::arg("source") = "nl", py::arg("examples") = "after");
  m.def("repair_marked", &repair_marked, py::arg("marked"), py::arg("kernel"),
        py::arg("constants") = repair::default_constants(), py::arg("n") = 20, py::arg("seed") = 0);
  m.def("optimize", &optimize, py::arg("program"), py::arg("kernel"), py::arg("mode") = "rules", py::arg("n") = 20,
        py::arg("seed") = 0);
  m.def("render_loop_kernel", [](const std::string& text) { return sched::render_kernel(sched::parse_kernel(text)); },
        py::arg("text"));
  m.def("apply_command", &apply_command, py::arg("kernel"), py::arg("command"));
  m.def("locality_cost", [](const std::string& text) { return sched::locality_cost(sched::parse_kernel(text)); },
        py::arg("kernel"));
  m.def("check_equivalence", &equivalence, py::arg("a"), py::arg("b"), py::arg("trials") = 5, py::arg("seed") = 0);
  m.def("run_cli", &run_cli, py::arg("args"));
}
