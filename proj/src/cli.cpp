#include "talift/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <thread>

#include "talift/cost_model.hpp"
#include "talift/eval.hpp"
#include "talift/gateway.hpp"
#include "talift/kernels.hpp"
#include "talift/loop_sched.hpp"
#include "talift/optimizer.hpp"
#include "talift/prompts.hpp"
#include "talift/repair.hpp"
#include "talift/simulator.hpp"
#include "talift/util.hpp"

namespace talift::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// "replay" alone means the shipped fixture set.
llm::BackendConfig backend_config(const std::string& spec, const std::string& cache) {
  llm::BackendConfig c;
  if (spec == "replay") {
    c.kind = "replay";
    c.replay_dir = asset_dir() / "replay";
  } else {
    c = llm::parse_backend_spec(spec);
  }
  if (!cache.empty()) c.cache_dir = cache;
  return c;
}

std::shared_ptr<llm::Backend> open_backend(const std::string& spec, const std::string& cache) {
  if (spec.empty()) return nullptr;
  return llm::make_backend(backend_config(spec, cache));
}

std::vector<std::int64_t> parse_int_list(const std::string& s, const char* flag) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (t.empty()) continue;
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw UsageError(fmt::format("{}: '{}' is not an integer", flag, t));
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(fmt::format("{}: empty list", flag));
  return out;
}

void write_out(const std::string& dir, const std::string& name, const std::string& content) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  write_file_atomic(fs::path(dir) / name, content);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json cost_json(const cost::CostBreakdown& c) {
  return {{"total", c.total},     {"mvin", c.mvin},     {"mvout", c.mvout},
          {"preload", c.preload}, {"compute", c.compute}, {"config", c.config},
          {"fence", c.fence},     {"dram_bytes_in", c.dram_bytes_in}, {"dram_bytes_out", c.dram_bytes_out}};
}

struct Common {
  std::string kernel, program, backend, cache, out;
  std::uint64_t seed = 0;
  int jobs = default_jobs();
  int n = 0;
};

kernels::KernelSpec kernel_named(const std::string& name) {
  auto all = kernels::load_kernels();
  return kernels::find_kernel(all, name);
}

// --- subcommands -----------------------------------------------------------

int run_simulate(const Common& o, std::ostream& out) {
  auto spec = kernel_named(o.kernel);
  auto text = read_file(o.program);
  auto program = isa::parse_program(text, spec.buffer_table());
  auto tc = kernels::generate_testcases(spec, o.seed, 1).at(0);
  auto m = sim::create_machine({}, spec.buffer_table(), kernels::stage_inputs(spec, tc));
  sim::execute(m, program);
  auto got = sim::read_output(m, spec.c);
  auto breakdown = cost::program_cost(program);
  bool match = got == tc.expected;
  out << fmt::format("{} = \n{}\n", spec.c, to_string(got));
  out << fmt::format("reference {}\n", match ? "matches" : "differs");
  out << fmt::format("cost {:g} ({} instructions)\n", breakdown.total, breakdown.instructions());
  write_out(o.out, "simulate.json",
            dump({{"kernel", spec.name}, {"seed", o.seed}, {"output", got.data}, {"expected", tc.expected.data},
                  {"match", match}, {"cost", cost_json(breakdown)}}));
  return match ? kOk : kVerifyFailed;
}

int run_verify(const Common& o, std::ostream& out) {
  auto spec = kernel_named(o.kernel);
  auto cases = kernels::generate_testcases(spec, o.seed, o.n > 0 ? o.n : 20);
  auto v = kernels::verify_text(read_file(o.program), spec, cases);
  if (v.passed) {
    out << fmt::format("PASS {} ({} testcases)\n", spec.name, cases.size());
  } else {
    out << fmt::format("FAIL {} [{}] {}\n", spec.name, kernels::failure_name(v.failure), v.message);
  }
  write_out(o.out, "verdict.json", dump(eval::verdict_json(v)));
  return v.passed ? kOk : kVerifyFailed;
}

struct TranslateFlags {
  int shots = 1;
  bool no_isa = false, no_nl = false;
  std::string source = "nl", examples = "after";
  std::vector<int> ks;
};

int run_translate(const Common& o, const TranslateFlags& t, std::ostream& out) {
  eval::ExperimentConfig cfg;
  cfg.kernels = {o.kernel};
  eval::Ablation ab;
  ab.label = o.kernel;
  ab.shots = t.shots;
  ab.include_isa = !t.no_isa;
  ab.nl_annotated = !t.no_nl;
  if (t.source == "nl") ab.source_style = prompts::SourceStyle::NlOnly;
  else if (t.source == "code") ab.source_style = prompts::SourceStyle::CodeOnly;
  else ab.source_style = prompts::SourceStyle::Both;
  ab.examples_position = t.examples == "before" ? prompts::ExamplesPosition::BeforeInstructions
                                                : prompts::ExamplesPosition::AfterInstructions;
  cfg.ablations = {ab};
  cfg.n = o.n > 0 ? o.n : 1;
  cfg.ks = t.ks.empty() ? std::vector<int>{1} : t.ks;
  cfg.seed = o.seed;
  cfg.jobs = o.jobs;
  cfg.params.model = llm::model_from_env();
  cfg.params.seed = static_cast<std::int64_t>(o.seed);
  auto backend = open_backend(o.backend, o.cache);
  auto report = eval::run_experiment(cfg, *backend, kernels::load_kernels());
  int passed = 0;
  for (const auto& rec : report.records) {
    out << fmt::format("sample {:>3}: {}\n", rec.sample_index,
                       rec.verdict.passed ? "pass" : fmt::format("fail [{}] {}", kernels::failure_name(rec.verdict.failure),
                                                                 rec.verdict.message));
    passed += rec.verdict.passed ? 1 : 0;
  }
  if (report.records.empty()) throw UsageError(fmt::format("kernel {} is the in-context example of this prompt", o.kernel));
  out << fmt::format("{}/{} samples passed\n", passed, report.records.size());
  if (!o.out.empty()) eval::write_report(report, o.out);
  return passed > 0 ? kOk : kVerifyFailed;
}

int run_evaluate(const Common& o, const std::string& config, const std::string& ks, std::ostream& out) {
  auto cfg = eval::load_experiment_config(config);
  if (!o.backend.empty()) cfg.backend = backend_config(o.backend, o.cache);
  if (o.n > 0) cfg.n = o.n;
  if (!ks.empty()) {
    cfg.ks.clear();
    for (auto k : parse_int_list(ks, "--k")) cfg.ks.push_back(static_cast<int>(k));
  }
  cfg.jobs = o.jobs;
  for (int k : cfg.ks) {
    if (k < 1 || k > cfg.n) throw UsageError(fmt::format("--k: {} is outside 1..{}", k, cfg.n));
  }
  auto backend = llm::make_backend(cfg.backend);
  auto report = eval::run_experiment(cfg, *backend, kernels::load_kernels());
  out << eval::render_report(report, eval::ReportFormat::Table);
  if (!o.out.empty()) eval::write_report(report, o.out);
  return kOk;
}

int run_repair(const Common& o, const std::string& mode_name, const std::string& constants_text, std::ostream& out) {
  auto spec = kernel_named(o.kernel);
  auto cases = kernels::generate_testcases(spec, o.seed, o.n > 0 ? o.n : 20);
  auto constants = constants_text.empty() ? repair::default_constants() : parse_int_list(constants_text, "--constants");
  auto text = read_file(o.program);
  repair::RepairOptions opts;
  opts.jobs = o.jobs;
  opts.params.model = llm::model_from_env();
  repair::RepairResult r;
  if (text.find("<CONST>") != std::string::npos) {
    r = repair::repair_template(repair::extract_holes(text), spec, cases, constants, opts);
  } else {
    auto mode = repair::parse_mode(mode_name);
    auto backend = open_backend(o.backend, o.cache);
    r = repair::repair(text, spec, cases, constants, mode, backend.get(), opts);
  }
  out << fmt::format("{}: {} candidates tried", repair::outcome_name(r.outcome), r.stats.candidates_tried);
  if (!r.reason.empty()) out << " (" << r.reason << ")";
  out << "\n";
  for (const auto& [name, value] : r.assignment) out << fmt::format("  {} = {}\n", name, value);
  json doc = {{"kernel", spec.name},
              {"outcome", repair::outcome_name(r.outcome)},
              {"reason", r.reason},
              {"assignment", r.assignment},
              {"candidates_tried", r.stats.candidates_tried},
              {"unparseable", r.stats.unparseable},
              {"cap_hit", r.stats.cap_hit}};
  write_out(o.out, "repair.json", dump(doc));
  if (r.outcome == repair::Outcome::Repaired) {
    write_out(o.out, "repaired.txt", r.program);
    return kOk;
  }
  return kVerifyFailed;
}

int run_optimize(const Common& o, const std::string& mode_name, std::ostream& out) {
  auto spec = kernel_named(o.kernel);
  auto cases = kernels::generate_testcases(spec, o.seed, o.n > 0 ? o.n : 20);
  auto program = isa::parse_program(read_file(o.program), spec.buffer_table());
  auto mode = opt::parse_mode(mode_name);
  auto backend = open_backend(o.backend, o.cache);
  opt::OptimizeOptions opts;
  opts.params.model = llm::model_from_env();
  auto r = opt::optimize_program(program, spec, cases, mode, backend.get(), opts);
  json log = json::array();
  for (const auto& s : r.log) {
    out << fmt::format("{:<16} {:<8} {}\n", s.stage, s.accepted ? "accepted" : "rejected", s.note);
    log.push_back({{"stage", s.stage}, {"accepted", s.accepted}, {"note", s.note}});
  }
  out << fmt::format("cost {:g} -> {:g}\n", r.before.total, r.after.total);
  write_out(o.out, "optimized.txt", isa::render_program(r.program));
  write_out(o.out, "optimize.json",
            dump({{"kernel", spec.name},
                  {"changed", r.changed},
                  {"before", cost_json(r.before)},
                  {"after", cost_json(r.after)},
                  {"order", r.plan.order},
                  {"log", log}}));
  if (!r.log.empty() && r.log.front().stage == "input" && !r.log.front().accepted) return kVerifyFailed;
  return kOk;
}

int run_schedule(const Common& o, const std::string& commands, std::ostream& out) {
  auto path = o.program.empty() ? asset_dir() / "schedule" / "doitgen.exo" : fs::path(o.program);
  auto kernel = sched::load_kernel(path);
  sched::SessionOptions sopts;
  sopts.seed = o.seed;
  std::vector<sched::StepRecord> steps;
  std::optional<sched::LoopNest> final_kernel;
  if (!commands.empty()) {
    json doc;
    try {
      doc = json::parse(read_file(commands));
    } catch (const json::exception& e) {
      throw UsageError(fmt::format("{}: {}", commands, e.what()));
    }
    if (doc.is_object() && doc.contains("commands")) doc = doc["commands"];
    if (!doc.is_array()) throw UsageError(fmt::format("{}: expected a list of commands", commands));
    sched::ScheduleSession session(kernel, sopts);
    for (const auto& j : doc) {
      try {
        session.apply(sched::parse_command(j));
      } catch (const sched::ScheduleError& e) {
        session.record_error(e.what());
      }
    }
    steps = session.transcript();
    final_kernel = session.kernel();
  } else {
    auto backend = open_backend(o.backend.empty() ? "replay" : o.backend, o.cache);
    llm::GenerationParams params;
    params.model = llm::model_from_env();
    steps = sched::run_llm_session(kernel, *backend, o.n > 0 ? o.n : 10, params, sopts);
    // the session does not hand back its kernel; replay the accepted steps
    sched::LoopNest k = kernel;
    for (const auto& s : steps) {
      if (s.ok && s.command) k = sched::apply_schedule_command(k, *s.command);
    }
    final_kernel = k;
  }
  out << fmt::format("initial cost {:g}\n", sched::locality_cost(kernel));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    auto what = s.command ? s.command->to_json().dump() : std::string("(no command)");
    out << fmt::format("step {}: {}\n  {}\n", i, what, s.ok ? fmt::format("ok, cost {:g}, equivalence {}", s.cost, s.equivalence)
                                                         : s.result);
  }
  out << fmt::format("final cost {:g}\n", sched::locality_cost(*final_kernel));
  write_out(o.out, "transcript.json", dump(sched::transcript_json(steps)));
  write_out(o.out, "kernel.exo", sched::render_kernel(*final_kernel));
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translate, verify, repair and optimize tensor-accelerator programs", "talift"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common o;
  auto add_common = [&](CLI::App* sub, bool needs_kernel) {
    auto* k = sub->add_option("--kernel", o.kernel, "Kernel fixture name (e.g. gv1)");
    if (needs_kernel) k->required();
    sub->add_option("--seed", o.seed, "Seed for testcases and sampling");
    sub->add_option("--out", o.out, "Directory for structured results");
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", o.backend, "http, replay or replay:<dir>");
    sub->add_option("--cache", o.cache, "Response cache directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Run a program on one random testcase");
  add_common(simulate, true);
  simulate->add_option("--program", o.program, "ISA program file")->required()->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Check a program against the reference on random testcases");
  add_common(verify, true);
  verify->add_option("--program", o.program, "ISA program file")->required()->check(CLI::ExistingFile);
  verify->add_option("--n", o.n, "Number of testcases (default 20)")->check(CLI::PositiveNumber);

  TranslateFlags tf;
  std::string ks_text;
  auto* translate = app.add_subcommand("translate", "Sample translations of one kernel and verify them");
  add_common(translate, true);
  add_backend(translate);
  translate->get_option("--backend")->required();
  translate->add_option("--n", o.n, "Samples to draw (default 1)")->check(CLI::PositiveNumber);
  translate->add_option("--jobs", o.jobs, "Verification workers")->check(CLI::PositiveNumber);
  translate->add_option("--shots", tf.shots, "In-context examples")->check(CLI::Range(0, 2));
  translate->add_flag("--no-isa", tf.no_isa, "Leave the ISA description out of the prompt");
  translate->add_flag("--no-nl", tf.no_nl, "Strip comments from the examples");
  translate->add_option("--source", tf.source, "Source shown for the target")
      ->check(CLI::IsMember({"nl", "code", "both"}));
  translate->add_option("--examples", tf.examples, "Example placement")->check(CLI::IsMember({"before", "after"}));
  translate->add_option("--k", tf.ks, "pass@k values to report");

  std::string config;
  auto* evaluate = app.add_subcommand("evaluate", "Run an experiment config and report pass@k");
  add_backend(evaluate);
  evaluate->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", o.out, "Directory for the report");
  evaluate->add_option("--n", o.n, "Override samples per prompt")->check(CLI::PositiveNumber);
  evaluate->add_option("--k", ks_text, "Override k values, e.g. 1,5,10");
  evaluate->add_option("--jobs", o.jobs, "Verification workers")->check(CLI::PositiveNumber);

  std::string mode = "enumerate", constants;
  auto* rep = app.add_subcommand("repair", "Fill holes in a near-miss candidate");
  add_common(rep, true);
  add_backend(rep);
  rep->add_option("--program,--candidate", o.program, "Candidate or marked template")
      ->required()
      ->check(CLI::ExistingFile);
  rep->add_option("--mode", mode, "llm, enumerate or llm_then_enumerate");
  rep->add_option("--constants", constants, "Candidate constants (default 0,1,3,4,12)");
  rep->add_option("--n", o.n, "Number of testcases (default 20)")->check(CLI::PositiveNumber);
  rep->add_option("--jobs", o.jobs, "Verification workers")->check(CLI::PositiveNumber);

  std::string opt_mode = "rules";
  auto* optimize = app.add_subcommand("optimize", "Reduce the modeled cost of a verified program");
  add_common(optimize, true);
  add_backend(optimize);
  optimize->add_option("--program", o.program, "ISA program file")->required()->check(CLI::ExistingFile);
  optimize->add_option("--mode", opt_mode, "rules, llm or llm_then_rules");
  optimize->add_option("--n", o.n, "Number of testcases (default 20)")->check(CLI::PositiveNumber);

  std::string commands;
  auto* schedule = app.add_subcommand("schedule", "Apply loop-nest schedule commands");
  add_backend(schedule);
  schedule->add_option("--program", o.program, "Loop-nest kernel (default: the shipped doitgen)")
      ->check(CLI::ExistingFile);
  schedule->add_option("--config", commands, "JSON list of commands; without it the backend drives")
      ->check(CLI::ExistingFile);
  schedule->add_option("--n", o.n, "Maximum model steps (default 10)")->check(CLI::PositiveNumber);
  schedule->add_option("--seed", o.seed, "Equivalence-check seed");
  schedule->add_option("--out", o.out, "Directory for transcript.json and kernel.exo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return run_simulate(o, out);
    if (*verify) return run_verify(o, out);
    if (*translate) return run_translate(o, tf, out);
    if (*evaluate) return run_evaluate(o, config, ks_text, out);
    if (*rep) return run_repair(o, mode, constants, out);
    if (*optimize) return run_optimize(o, opt_mode, out);
    if (*schedule) return run_schedule(o, commands, out);
  } catch (const llm::GatewayError& e) {
    if (e.code() == llm::GatewayErrc::ConfigError) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
    err << "backend error: " << e.what();
    if (!e.fingerprint().empty() && std::string_view(e.what()).find(e.fingerprint()) == std::string_view::npos) {
      err << " (fingerprint " << e.fingerprint() << ")";
    }
    err << "\n";
    return kBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"talift"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace talift::cli
