#include "talift/prompts.hpp"

#include <fmt/format.h>

#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>

#include "talift/util.hpp"

namespace talift::prompts {

using nlohmann::json;

std::string_view role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string Prompt::flat_text() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "\n\n";
    out += m.text;
  }
  return out;
}

std::string fingerprint_of(const std::vector<Message>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"content", m.text}, {"role", role_name(m.role)}});
  return sha256_hex(arr.dump());
}

Prompt make_prompt(std::vector<Message> messages) {
  Prompt p;
  p.fingerprint = fingerprint_of(messages);
  p.messages = std::move(messages);
  return p;
}

const Example& PromptAssets::example(std::string_view name) const {
  for (const auto& e : examples) {
    if (e.name == name) return e;
  }
  throw PromptError(PromptErrc::MissingExample, fmt::format("no in-context example named '{}'", name));
}

namespace {

std::string chomp(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string load(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) {
    throw PromptError(PromptErrc::MissingAsset, fmt::format("missing prompt asset {}", p.string()));
  }
  return chomp(read_file(p));
}

std::string substitute(std::string text, std::string_view key, std::string_view value) {
  std::string needle = fmt::format("{{{}}}", key);
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + value.size())) {
    text.replace(pos, needle.size(), value);
  }
  return text;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

PromptAssets load_assets(const std::filesystem::path& dir) {
  PromptAssets a;
  auto ins = dir / "instructions";
  a.isa = load(dir / "isa.txt");
  a.translate_intro = load(ins / "translate_intro.txt");
  a.translate_task = load(ins / "translate_task.txt");
  for (int s = 0; s < 3; ++s) a.translate_closing[s] = load(ins / fmt::format("translate_closing_{}.txt", s));
  a.source_nl = load(ins / "source_nl.txt");
  a.source_code = load(ins / "source_code.txt");
  a.optimize_header = load(ins / "optimize_header.txt");
  std::istringstream hs(load(ins / "optimize_heuristics.txt"));
  for (std::string line; std::getline(hs, line);) {
    if (!trim(line).empty()) a.default_heuristics.push_back(line);
  }
  a.reorder_header = load(ins / "reorder_header.txt");
  a.repair_mark = load(ins / "repair_mark.txt");
  a.repair_fill = load(ins / "repair_fill.txt");
  a.schedule_system = load(ins / "schedule_system.txt");
  a.schedule_task = load(ins / "schedule_task.txt");
  a.schedule_applied = load(ins / "schedule_applied.txt");
  a.schedule_error = load(ins / "schedule_error.txt");
  json index = json::parse(load(dir / "examples" / "index.json"));
  for (const auto& e : index) {
    Example ex;
    ex.name = e.at("name").get<std::string>();
    ex.kernel = e.at("kernel").get<std::string>();
    ex.annotated = load(dir / "examples" / (ex.name + ".annotated.txt"));
    ex.stripped = load(dir / "examples" / (ex.name + ".stripped.txt"));
    a.examples.push_back(std::move(ex));
  }
  return a;
}

const PromptAssets& default_assets() {
  static const PromptAssets assets = load_assets(asset_dir() / "prompts");
  return assets;
}

std::vector<const Example*> selected_examples(const PromptSpec& spec, const PromptAssets& assets) {
  if (spec.shots < 0 || spec.shots > 2) {
    throw PromptError(PromptErrc::MissingExample, fmt::format("unsupported shot count {}", spec.shots));
  }
  std::vector<const Example*> out;
  if (!spec.examples.empty()) {
    if (static_cast<int>(spec.examples.size()) < spec.shots) {
      throw PromptError(PromptErrc::MissingExample,
                        fmt::format("{} shots requested but only {} examples named", spec.shots,
                                    spec.examples.size()));
    }
    for (int s = 0; s < spec.shots; ++s) out.push_back(&assets.example(spec.examples[s]));
    return out;
  }
  if (static_cast<int>(assets.examples.size()) < spec.shots) {
    throw PromptError(PromptErrc::MissingExample,
                      fmt::format("{} shots requested but only {} examples available", spec.shots,
                                  assets.examples.size()));
  }
  for (int s = 0; s < spec.shots; ++s) out.push_back(&assets.examples[s]);
  return out;
}

std::string describe_kernel(const kernels::KernelSpec& k) {
  auto tr = [](bool t) { return t ? "transposed" : "not transposed"; };
  std::string b_kind = k.is_matvec() ? "vector" : "matrix";
  std::string out = fmt::format("Multiplication of {}x{} matrix {}, {}, and {}x{} {} {}, {}", k.i, k.k, k.a,
                                tr(k.transpose_a), k.k, k.j, b_kind, k.b, tr(k.transpose_b));
  if (k.op == kernels::Op::MatmulBias) {
    out += fmt::format(", {} {}x{} bias matrix {}", k.sub ? "minus" : "plus", k.i, k.j, *k.d);
  }
  out += ". ";
  if (k.is_matvec() && k.op == kernels::Op::Matmul) {
    out += "The matrix and vector are both stored in dram. ";
  } else {
    out += "The matrices are all stored in DRAM. ";
  }
  out += fmt::format("The result is stored in the {}x{} {} {}.", k.i, k.j, b_kind, k.c);
  if (k.is_matvec()) out += " Systolic array size is 4x4 and each element is 4bytes.";
  return out;
}

std::string test_function(const kernels::KernelSpec& k) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  if (k.op == kernels::Op::MatmulBias) {
    return fmt::format(
        "void test({0}, {1}, {2}, {3}) {{\n    tiled_matmul_outer_eigen_bias({0}, {1}, {2}, {3}, {4}, {5}, {6}, "
        "{7}, {8}, {9});\n}}",
        k.a, k.b, *k.d, k.c, k.i, k.k, k.j, b(k.transpose_a), b(k.transpose_b), b(k.sub));
  }
  return fmt::format(
      "void test({0}, {1}, {2}) {{\n    tiled_matmul_outer_eigen({0}, {1}, {2}, {3}, {4}, {5}, {6}, {7});\n}}",
      k.a, k.b, k.c, k.i, k.k, k.j, b(k.transpose_a), b(k.transpose_b));
}

std::string strip_comments(std::string_view example_text) {
  std::istringstream in{std::string(example_text)};
  std::vector<std::string> out;
  bool inside = false;
  for (std::string line; std::getline(in, line);) {
    if (trim(line) == "```") {
      inside = !inside;
      out.push_back(line);
      continue;
    }
    if (inside) {
      std::string t = trim(line);
      if (t.rfind("//", 0) == 0) continue;
      if (auto pos = line.find("//"); pos != std::string::npos) {
        line.erase(pos);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
      }
    }
    out.push_back(line);
  }
  std::string s;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) s += '\n';
    s += out[i];
  }
  return s;
}

Prompt build_translation_prompt(const PromptSpec& spec, const PromptAssets& assets) {
  auto examples = selected_examples(spec, assets);
  std::vector<std::string> example_texts;
  int n = 1;
  for (const auto* e : examples) {
    example_texts.push_back(
        fmt::format("Example {}:\n{}", n++, spec.nl_annotated ? e->annotated : e->stripped));
  }
  std::string examples_block = join(example_texts, "\n\n");
  std::string target = fmt::format("Example {}:\n#test function\n// {}\n{}", n, describe_kernel(spec.kernel),
                                   test_function(spec.kernel));
  std::string source;
  switch (spec.source_style) {
    case SourceStyle::NlOnly: source = assets.source_nl; break;
    case SourceStyle::CodeOnly: source = assets.source_code; break;
    case SourceStyle::Both: {
      std::string code = assets.source_code;
      // both descriptions share the same lead-in sentence
      if (auto nl = code.find('\n'); nl != std::string::npos) code = trim(code.substr(nl + 1));
      source = assets.source_nl + "\n\n" + code;
      break;
    }
  }
  std::string task = assets.translate_task + "\n" + assets.translate_closing[spec.shots];
  std::vector<std::string> system_parts{assets.translate_intro};
  if (spec.include_isa) system_parts.push_back(assets.isa);
  std::vector<std::string> user_parts{source};
  if (spec.examples_position == ExamplesPosition::BeforeInstructions) {
    system_parts.push_back(examples_block);
    system_parts.push_back(task);
  } else {
    system_parts.push_back(task);
    user_parts.push_back(examples_block);
  }
  user_parts.push_back(target);
  return make_prompt({{Role::System, join(system_parts, "\n\n")}, {Role::User, join(user_parts, "\n\n")}});
}

Prompt build_block_optimize_prompt(const std::string& block_text, const std::string& isa_text,
                                   const std::vector<std::string>& heuristics, const std::string& feedback,
                                   const PromptAssets& assets) {
  std::vector<std::string> parts{assets.optimize_header};
  if (!heuristics.empty()) {
    std::string h = "// heuristics:";
    for (const auto& line : heuristics) h += "\n" + line;
    parts[0] += "\n" + h;
  }
  parts.push_back(isa_text);
  if (!feedback.empty()) parts.push_back("// cost model feedback:\n" + chomp(feedback));
  parts.push_back(chomp(block_text));
  return make_prompt({{Role::User, join(parts, "\n\n")}});
}

Prompt build_reorder_prompt(const std::vector<std::string>& blocks, const std::string& isa_text,
                            const PromptAssets& assets) {
  if (blocks.empty()) throw PromptError(PromptErrc::EmptyBlocks, "reorder prompt needs at least one block");
  std::vector<std::string> labelled;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    labelled.push_back(fmt::format("// Block {}\n{}", i, chomp(blocks[i])));
  }
  return make_prompt(
      {{Role::User, join({assets.reorder_header, isa_text, join(labelled, "\n\n")}, "\n\n")}});
}

std::string format_constant_set(const std::vector<std::int64_t>& constants) {
  std::string out = "{";
  for (std::size_t i = 0; i < constants.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(constants[i]);
  }
  return out + "}";
}

std::pair<Prompt, Prompt> build_repair_prompts(const std::string& candidate,
                                               const std::vector<std::int64_t>& constants,
                                               const std::optional<std::string>& marked, const Prompt* context,
                                               const PromptAssets& assets) {
  if (trim(candidate).empty()) throw PromptError(PromptErrc::EmptyCandidate, "repair needs a candidate program");
  if (constants.empty()) throw PromptError(PromptErrc::EmptyConstantSet, "repair needs a non-empty constant set");
  std::vector<Message> first;
  if (context) first = context->messages;
  first.push_back({Role::Assistant, fmt::format("```\n{}\n```", chomp(candidate))});
  first.push_back({Role::User, assets.repair_mark});
  std::vector<Message> second = first;
  second.push_back({Role::Assistant, fmt::format("```\n{}\n```", chomp(marked.value_or(candidate)))});
  second.push_back({Role::User, substitute(assets.repair_fill, "constants", format_constant_set(constants))});
  return {make_prompt(std::move(first)), make_prompt(std::move(second))};
}

Prompt build_prompt(const PromptSpec& spec, const PromptAssets& assets) {
  switch (spec.task) {
    case Task::Translate: return build_translation_prompt(spec, assets);
    case Task::OptimizeBlock:
      if (spec.candidate.empty()) throw PromptError(PromptErrc::MissingAttachment, "optimize needs a block");
      return build_block_optimize_prompt(spec.candidate, assets.isa,
                                         spec.heuristics.value_or(assets.default_heuristics), spec.feedback,
                                         assets);
    case Task::ReorderBlocks: return build_reorder_prompt(spec.blocks, assets.isa, assets);
    case Task::RepairMark: return build_repair_prompts(spec.candidate, spec.constants, std::nullopt, nullptr, assets).first;
    case Task::RepairFill:
      return build_repair_prompts(spec.candidate, spec.constants,
                                  spec.marked.empty() ? std::nullopt : std::optional(spec.marked), nullptr, assets)
          .second;
  }
  throw PromptError(PromptErrc::MissingAttachment, "unknown task");
}

}  // namespace talift::prompts
