#pragma once

// Loop-nest scheduling: a small affine loop IR in the seq-loop dialect, the
// five schedule commands with their JSON protocol, a reference interpreter,
// randomized equivalence checking and a locality cost proxy.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "talift/gateway.hpp"
#include "talift/prompts.hpp"

namespace talift::sched {

enum class SchedErrc : std::uint8_t {
  SyntaxError,
  NonConstantBound,
  OutOfBounds,
  LineNotFound,
  AmbiguousLine,
  IllegalRewrite,
  NonDivisibleTile,
  BadCommand,
  ShapeMismatch,
  SignatureMismatch,
};

std::string_view errc_name(SchedErrc c);

class ScheduleError : public std::runtime_error {
 public:
  ScheduleError(SchedErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  SchedErrc code() const { return code_; }

 private:
  SchedErrc code_;
};

/// constant + sum(coeff * var); terms keep their order of appearance.
struct Affine {
  std::int64_t constant = 0;
  std::vector<std::pair<std::string, std::int64_t>> terms;

  std::int64_t coeff(std::string_view var) const;
  bool is_constant() const { return terms.empty(); }
  friend bool operator==(const Affine&, const Affine&) = default;
};

std::string render_affine(const Affine& a);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind : std::uint8_t { Number, Var, Read, Neg, Add, Sub, Mul, Div };
  Kind kind = Kind::Number;
  double number = 0.0;
  std::string name;           // Var, Read
  std::vector<Affine> index;  // Read
  ExprPtr lhs, rhs;           // Neg uses lhs
};

bool expr_equal(const ExprPtr& a, const ExprPtr& b);
std::string render_expr(const ExprPtr& e);

struct Stmt;

struct Loop {
  std::string var;
  std::int64_t lo = 0, hi = 0;
  std::vector<Stmt> body;
};

/// array[index] = rhs, or += when accumulate is set.
struct Assign {
  std::string array;
  std::vector<Affine> index;
  ExprPtr rhs;
  bool accumulate = false;
};

struct Stmt {
  std::variant<Loop, Assign> node;
};

struct ArrayDecl {
  std::string name;
  std::vector<std::int64_t> extents;
  std::string memory = "DRAM";

  std::int64_t elements() const;
  friend bool operator==(const ArrayDecl&, const ArrayDecl&) = default;
};

struct LoopNest {
  std::string name;
  std::vector<ArrayDecl> arrays;
  std::vector<Stmt> body;

  const ArrayDecl* find_array(std::string_view n) const;
};

/// Structural equality.
bool equal(const LoopNest& a, const LoopNest& b);
bool equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b);

/// Throws ScheduleError (SyntaxError, NonConstantBound, OutOfBounds).
LoopNest parse_kernel(std::string_view text);
LoopNest load_kernel(const std::filesystem::path& p);
std::string render_kernel(const LoopNest& k);

/// Source text of a single statement line, e.g. "for p in seq(0, 64):".
std::string render_line(const Stmt& s);

/// Checks every access against the array extents over the loop ranges.
void check_bounds(const LoopNest& k);

// ---------------------------------------------------------------------------
// Commands

enum class CommandKind : std::uint8_t { Tile, Fuse, Reorder, Fission, Unroll };

std::string_view command_name(CommandKind k);

struct ScheduleCommand {
  CommandKind kind = CommandKind::Tile;
  std::string line, line2;  // line2: fuse only
  std::int64_t tile_size = 0;
  std::string outer_name, inner_name;
  bool after = false;  // fission location

  nlohmann::json to_json() const;
};

/// Accepts exactly the protocol's argument sets; tile_size may be a string.
ScheduleCommand parse_command(const nlohmann::json& j);

/// The command after the last "APPLY:" sentinel in a reply, if any. Throws
/// ScheduleError(BadCommand) when the JSON is malformed.
std::optional<ScheduleCommand> extract_apply(std::string_view reply);

/// All-or-nothing; throws ScheduleError on rejection.
LoopNest apply_schedule_command(const LoopNest& k, const ScheduleCommand& c);

/// Paths (child indices from the root body) of the statements whose normalized
/// line text matches `line`, honoring a trailing " #N" occurrence suffix.
std::vector<std::vector<std::size_t>> find_lines(const LoopNest& k, std::string_view line);

// ---------------------------------------------------------------------------
// Execution

using ArrayValues = std::map<std::string, std::vector<float>>;

/// Sequential float evaluation. Arrays missing from `inputs` start zeroed.
/// Throws ScheduleError(ShapeMismatch).
ArrayValues interpret(const LoopNest& k, const ArrayValues& inputs);

struct EquivalenceVerdict {
  bool passed = true;
  int trials = 0;
  std::optional<int> failing_trial;
  std::string array;
  std::size_t element = 0;
  float got = 0, want = 0;
};

/// Random small-integer inputs, compared bit-exactly. Throws
/// ScheduleError(SignatureMismatch) when the array declarations differ.
EquivalenceVerdict check_equivalence(const LoopNest& a, const LoopNest& b, int trials, std::uint64_t seed);

/// Divides every constant that is a multiple of `factor` (bounds, extents,
/// index coefficients and offsets). Throws when the clone is out of bounds.
LoopNest scale_extents(const LoopNest& k, std::int64_t factor);

/// Factor that brings the largest extent down to 8 (1 when already small).
std::int64_t reduction_factor(const LoopNest& k);

/// The same command for a clone made by scale_extents.
ScheduleCommand scale_command(const ScheduleCommand& c, std::int64_t factor);

/// Loop iterations plus statement executions, plus `penalty` per dynamic
/// access whose innermost enclosing loop variable that appears in it moves
/// the row-major address by other than one element.
double locality_cost(const LoopNest& k, double penalty = 4.0);

// ---------------------------------------------------------------------------
// Sessions

struct StepRecord {
  std::optional<ScheduleCommand> command;  // unset when the reply had no usable command
  bool ok = false;
  std::string result;  // "ok" or the error text
  double cost = 0;
  std::string equivalence;  // "pass", or why the check could not run
};

nlohmann::json transcript_json(const std::vector<StepRecord>& steps);

struct SessionOptions {
  int trials = 5;
  std::uint64_t seed = 0;
  double penalty = 4.0;
};

/// Applies commands one at a time. An accepted rewrite is replayed on a
/// reduced-extent clone and compared against the reduced original; a
/// mismatch rejects it.
class ScheduleSession {
 public:
  explicit ScheduleSession(LoopNest k, SessionOptions opts = {});

  const LoopNest& kernel() const { return current_; }
  const std::vector<StepRecord>& transcript() const { return steps_; }
  const StepRecord& apply(const ScheduleCommand& c);
  /// Records a reply that did not carry a usable command.
  const StepRecord& record_error(const std::string& text);

 private:
  SessionOptions opts_;
  LoopNest original_, current_;
  std::int64_t factor_ = 1;
  std::optional<LoopNest> reduced_original_, reduced_;
  std::string reduced_note_;
  std::vector<StepRecord> steps_;
};

std::string cost_line(double cost);

prompts::Prompt schedule_task_prompt(const LoopNest& k, double cost,
                                     const prompts::PromptAssets& assets = prompts::default_assets());

/// Drives a conversation for up to `max_steps` commands. Stops early when a
/// reply has no APPLY line.
std::vector<StepRecord> run_llm_session(const LoopNest& k, llm::Backend& backend, int max_steps,
                                        const llm::GenerationParams& params, const SessionOptions& opts = {},
                                        const prompts::PromptAssets& assets = prompts::default_assets());

}  // namespace talift::sched
