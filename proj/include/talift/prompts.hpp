#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "talift/kernels.hpp"

namespace talift::prompts {

enum class Role : std::uint8_t { System, User, Assistant };
std::string_view role_name(Role r);

struct Message {
  Role role = Role::User;
  std::string text;
  friend bool operator==(const Message&, const Message&) = default;
};

struct Prompt {
  std::vector<Message> messages;
  std::string fingerprint;

  /// All message texts joined by blank lines, in order.
  std::string flat_text() const;
  friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// SHA-256 over the canonical JSON of the message list.
std::string fingerprint_of(const std::vector<Message>& messages);
Prompt make_prompt(std::vector<Message> messages);

enum class Task : std::uint8_t { Translate, OptimizeBlock, ReorderBlocks, RepairMark, RepairFill };
enum class SourceStyle : std::uint8_t { NlOnly, CodeOnly, Both };
enum class ExamplesPosition : std::uint8_t { BeforeInstructions, AfterInstructions };

enum class PromptErrc : std::uint8_t {
  MissingExample,
  EmptyConstantSet,
  EmptyCandidate,
  EmptyBlocks,
  MissingAttachment,
  MissingAsset,
};

class PromptError : public std::runtime_error {
 public:
  PromptError(PromptErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  PromptErrc code() const { return code_; }

 private:
  PromptErrc code_;
};

struct Example {
  std::string name;
  std::string kernel;  // fixture the example solves
  std::string annotated;
  std::string stripped;
};

struct PromptAssets {
  std::string isa;
  std::string translate_intro, translate_task;
  std::string translate_closing[3];
  std::string source_nl, source_code;
  std::string optimize_header;
  std::vector<std::string> default_heuristics;
  std::string reorder_header;
  std::string repair_mark, repair_fill;
  std::string schedule_system, schedule_task, schedule_applied, schedule_error;
  /// In shot order: the first entry is the one-shot example.
  std::vector<Example> examples;

  const Example& example(std::string_view name) const;
};

/// Loads `dir` (default: assets/prompts).
PromptAssets load_assets(const std::filesystem::path& dir);
const PromptAssets& default_assets();

struct PromptSpec {
  Task task = Task::Translate;
  int shots = 1;
  bool nl_annotated = true;
  bool include_isa = true;
  SourceStyle source_style = SourceStyle::NlOnly;
  ExamplesPosition examples_position = ExamplesPosition::AfterInstructions;
  kernels::KernelSpec kernel;
  /// Explicit example names; empty means the first `shots` examples.
  std::vector<std::string> examples;

  // attachments
  std::string candidate;
  std::string marked;
  std::vector<std::string> blocks;
  std::string feedback;
  std::vector<std::int64_t> constants;
  std::optional<std::vector<std::string>> heuristics;
};

/// Examples used by a translation spec, in order.
std::vector<const Example*> selected_examples(const PromptSpec& spec, const PromptAssets& assets);

/// One-line comment describing the kernel, in the style of the shipped examples.
std::string describe_kernel(const kernels::KernelSpec& k);

/// The `test` function wrapper for a kernel.
std::string test_function(const kernels::KernelSpec& k);

/// Removes `//` commentary inside fenced code; text outside fences is kept.
std::string strip_comments(std::string_view example_text);

Prompt build_translation_prompt(const PromptSpec& spec, const PromptAssets& assets = default_assets());

Prompt build_block_optimize_prompt(const std::string& block_text, const std::string& isa_text,
                                   const std::vector<std::string>& heuristics,
                                   const std::string& feedback = {},
                                   const PromptAssets& assets = default_assets());

Prompt build_reorder_prompt(const std::vector<std::string>& blocks, const std::string& isa_text,
                            const PromptAssets& assets = default_assets());

/// Prompt 1 asks the model to mark uncertain constants; prompt 2 asks it to
/// fill them from `constants`. `marked` is the model's reply to prompt 1
/// (defaults to the candidate). `context` is the translation conversation the
/// candidate came from, if any.
std::pair<Prompt, Prompt> build_repair_prompts(const std::string& candidate,
                                               const std::vector<std::int64_t>& constants,
                                               const std::optional<std::string>& marked = std::nullopt,
                                               const Prompt* context = nullptr,
                                               const PromptAssets& assets = default_assets());

/// Dispatches on spec.task.
Prompt build_prompt(const PromptSpec& spec, const PromptAssets& assets = default_assets());

std::string format_constant_set(const std::vector<std::int64_t>& constants);

}  // namespace talift::prompts
