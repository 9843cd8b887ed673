// Regenerates the shipped replay fixtures by running each workflow against a
// scripted backend and recording what it was asked. With --check, compares
// against an existing fixture directory instead of writing.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>

#include "talift/eval.hpp"
#include "talift/gateway.hpp"
#include "talift/kernels.hpp"
#include "talift/loop_sched.hpp"
#include "talift/optimizer.hpp"
#include "talift/repair.hpp"
#include "talift/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace talift;

namespace {

using Files = std::map<std::string, std::string>;

/// Answers from a script and keeps every request as a wildcard record.
class Recorder : public llm::Backend {
 public:
  using Script = std::function<std::vector<std::string>(const prompts::Prompt&, int n)>;
  Recorder(std::string group, Files& files, Script script)
      : group_(std::move(group)), files_(files), script_(std::move(script)) {}

  std::string id() const override { return "replay"; }
  std::vector<llm::Completion> complete(const prompts::Prompt& prompt, const llm::GenerationParams& params) override {
    auto texts = script_(prompt, params.n_samples);
    json rec = {{"fingerprint", prompt.fingerprint}, {"params", nullptr}, {"completions", texts}};
    files_[fmt::format("{}/{}.json", group_, prompt.fingerprint.substr(0, 16))] = rec.dump(2) + "\n";
    std::vector<llm::Completion> out;
    for (auto& t : texts) out.push_back({t, id(), false, std::nullopt});
    return out;
  }

 private:
  std::string group_;
  Files& files_;
  Script script_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

std::string fenced(const std::string& lead, const std::string& code) {
  return fmt::format("{}\n\n```c\n{}{}```\n", lead, code, code.ends_with('\n') ? "" : "\n");
}

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  auto at = text.find(from);
  require(at != std::string::npos, fmt::format("fixture source lacks '{}'", from));
  return text.replace(at, from.size(), to);
}

// Each mutation is checked to fail before it is shipped.
std::string seeded_failure(const kernels::KernelSpec& k, int variant) {
  const auto& g = k.golden;
  switch (variant % 4) {
    case 0: {
      auto at = g.find("mvout(");
      require(at != std::string::npos, k.name + ": golden has no mvout");
      auto end = g.find('\n', at);
      return fenced("This stores the result after the final compute.", g.substr(0, at) + g.substr(end + 1));
    }
    case 1:
      return fenced("The program below issues the moves and computes.", replace_once(g, "preload(", "preload_weights("));
    case 2:
      return "The kernel can be expressed with a sequence of mvin, preload and compute instructions "
             "followed by an mvout of the accumulator rows.\n";
    default: {
      auto at = g.find("compute_preloaded(");
      require(at != std::string::npos, k.name + ": golden has no compute_preloaded");
      auto start = g.rfind('\n', at) + 1;
      auto end = g.find('\n', at);
      return fenced("The accumulation happens in the second pass.", g.substr(0, start) + g.substr(end + 1));
    }
  }
}

/// Half golden, half seeded failures, in a seeded order with a golden first.
std::vector<std::string> translation_samples(const kernels::KernelSpec& k, int n, std::uint64_t seed) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(i % 2 == 0 ? fenced(fmt::format("Translation of {}.", k.name), k.golden) : seeded_failure(k, i / 2));
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = out.size(); i > 2; --i) {
    auto j = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(i) - 1));
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

void gen_translate(Files& files, const fs::path& assets) {
  auto cfg = eval::load_experiment_config(assets / "experiments" / "replay_demo.json");
  auto all = kernels::load_kernels();
  Recorder rec("translate", files, [&](const prompts::Prompt& p, int n) {
    for (const auto& ab : cfg.ablations) {
      for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
        const auto& k = kernels::find_kernel(all, cfg.kernels[i]);
        if (prompts::build_translation_prompt(eval::prompt_spec(ab, k)).fingerprint == p.fingerprint) {
          return translation_samples(k, n, i);
        }
      }
    }
    throw std::runtime_error("unexpected translation prompt");
  });
  auto report = eval::run_experiment(cfg, rec, all);
  for (const auto& row : report.rows) {
    for (const auto& kc : row.counts) {
      require(kc.c * 2 == kc.n, fmt::format("{} / {}: {} of {} passed", row.label, kc.kernel, kc.c, kc.n));
    }
  }
}

void gen_repair(Files& files) {
  auto all = kernels::load_kernels();
  const auto& k = kernels::find_kernel(all, "gm3");
  const std::string good = "mvin(BPA + kb * 48 + ib * 4,";
  auto broken = replace_once(k.golden, good, "mvin(BPA + kb * 48 + ib * 3,");
  auto marked = replace_once(k.golden, good, "mvin(BPA + kb * 48 + ib * <CONST>,");
  files["inputs/gm3_broken.c"] = broken;
  files["inputs/gm3_marked.c"] = marked;

  int call = 0;
  Recorder rec("repair", files, [&](const prompts::Prompt&, int n) {
    std::vector<std::string> texts;
    if (call++ == 0) {
      texts.push_back(fenced("The column offset of the BPA tiles looks wrong.", marked));
    } else {
      for (int i = 0; i < n; ++i) texts.push_back(fenced("Filled in.", k.golden));
    }
    return texts;
  });
  auto cases = kernels::generate_testcases(k, 0, 20);
  auto r = repair::repair(broken, k, cases, repair::default_constants(), repair::Mode::LlmThenEnumerate, &rec);
  require(r.outcome == repair::Outcome::Repaired, "repair fixture did not repair: " + r.reason);
}

void gen_optimize(Files& files) {
  auto all = kernels::load_kernels();
  const auto& k = kernels::find_kernel(all, "gv1");
  auto text = k.golden;
  for (const std::string line : {"mvin2(p + 0x4, p_sp_addr + 4, 1, 4);",
                                 "preload(p_sp_addr + 8, B_p_acc_addr | 1 << 30, 1, 4, 1, 4);"}) {
    text = replace_once(text, line, line + "\n    " + line);
  }
  files["inputs/gv1_redundant.c"] = text;
  auto program = isa::parse_program(text, k.buffer_table());

  auto blocks = opt::segment_blocks(program);
  for (auto& b : blocks) b = opt::peephole_block(b);
  auto staged = opt::reassemble(program, blocks, [&] {
    std::vector<int> id(blocks.size());
    for (std::size_t i = 0; i < id.size(); ++i) id[i] = static_cast<int>(i);
    return id;
  }());
  opt::refresh_footprints(staged, blocks);
  auto plan = opt::search_reorder(staged, blocks, opt::analyze_dependences(blocks));

  std::size_t call = 0;
  Recorder rec("optimize", files, [&](const prompts::Prompt&, int) {
    std::size_t i = call++;
    if (i < blocks.size()) return std::vector<std::string>{fenced("Tightened block.", opt::render_block(blocks[i]))};
    std::string order;
    for (int b : plan.order) order += fmt::format("Block {}\n", b);
    return std::vector<std::string>{"Proposed order:\n" + order};
  });
  auto cases = kernels::generate_testcases(k, 0, 20);
  auto r = opt::optimize_program(program, k, cases, opt::Mode::Llm, &rec);
  require(r.changed && r.after.total < r.before.total, "optimize fixture did not reduce cost");
}

void gen_schedule(Files& files, const fs::path& assets) {
  auto kernel = sched::load_kernel(assets / "schedule" / "doitgen.exo");
  auto commands = json::parse(read_file(assets / "schedule" / "doitgen_transcript.json"));
  const std::vector<std::string> leads = {
      "Swapping the p loop inward should give a unit-stride walk over C4.",
      "That failed because the loop body holds two statements. Tiling p instead.",
      "Unrolling the tiled s loop next.",
  };
  std::size_t call = 0;
  Recorder rec("schedule", files, [&](const prompts::Prompt&, int) {
    std::size_t i = call++;
    if (i < commands.size()) return std::vector<std::string>{fmt::format("{}\n\nAPPLY:\n{}\n", leads[i], commands[i].dump())};
    return std::vector<std::string>{"No further rewrites to try.\n"};
  });
  llm::GenerationParams params;
  auto steps = sched::run_llm_session(kernel, rec, 10, params);
  require(steps.size() == commands.size(), "schedule fixture session length");
}

Files generate(const fs::path& assets) {
  Files files;
  gen_translate(files, assets);
  gen_repair(files);
  gen_optimize(files);
  gen_schedule(files, assets);
  return files;
}

int check(const Files& files, const fs::path& dir) {
  int bad = 0;
  for (const auto& [rel, content] : files) {
    auto p = dir / rel;
    if (!fs::exists(p)) {
      std::cerr << "missing " << rel << "\n";
      ++bad;
    } else if (read_file(p) != content) {
      std::cerr << "differs " << rel << "\n";
      ++bad;
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir).generic_string();
    if (!files.contains(rel)) {
      std::cerr << "stale " << rel << "\n";
      ++bad;
    }
  }
  std::cout << fmt::format("{} fixture files, {} problems\n", files.size(), bad);
  return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the replay fixture set", "gen_replay"};
  std::string out, check_dir;
  auto* o = app.add_option("--out", out, "Write fixtures here");
  app.add_option("--check", check_dir, "Compare against this directory")->excludes(o);
  CLI11_PARSE(app, argc, argv);
  try {
    auto files = generate(asset_dir());
    if (!check_dir.empty()) return check(files, check_dir);
    if (out.empty()) out = (asset_dir() / "replay").string();
    for (const auto& [rel, content] : files) {
      fs::create_directories((fs::path(out) / rel).parent_path());
      write_file_atomic(fs::path(out) / rel, content);
    }
    std::cout << fmt::format("wrote {} fixture files to {}\n", files.size(), out);
  } catch (const std::exception& e) {
    std::cerr << "gen_replay: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
