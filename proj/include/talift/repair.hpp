#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "talift/gateway.hpp"
#include "talift/kernels.hpp"
#include "talift/prompts.hpp"

namespace talift::repair {

inline constexpr std::string_view kConstToken = "<CONST>";

class RepairError : public std::runtime_error {
 public:
  enum class Code : std::uint8_t { NoHolesFound, EmptyConstantSet };
  RepairError(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Hole {
  std::string id;  // h0, h1, ... for <CONST>; the identifier for named holes
  std::size_t line = 0;
  std::size_t column = 0;
  bool named = false;
};

/// Code split around its holes: pieces.size() == holes.size() + 1.
struct HoleTemplate {
  std::vector<std::string> pieces;
  std::vector<Hole> holes;
  std::string origin;

  std::string fill(const std::vector<std::int64_t>& values) const;
};

/// Each <CONST> becomes a hole in textual order. When `original` is given, an
/// integer declaration that the original lacks is a named hole at its
/// initializer. Throws NoHolesFound.
HoleTemplate extract_holes(const std::string& marked_code, const std::optional<std::string>& original = std::nullopt);

struct Fill {
  std::size_t index = 0;
  std::vector<std::int64_t> values;
  std::string text;
  isa::Program program;
};

/// Cartesian product of `constants` over the holes, first hole varying
/// slowest. Fills that do not parse are skipped and counted.
class FillEnumerator {
 public:
  FillEnumerator(const HoleTemplate& t, std::vector<std::int64_t> constants, std::size_t cap,
                 isa::BufferTable buffers);

  std::optional<Fill> next();
  /// Product size, saturated at SIZE_MAX.
  std::size_t total() const { return total_; }
  std::size_t tried() const { return tried_; }
  std::size_t unparseable() const { return unparseable_; }
  /// Set once the cap stopped enumeration before the product was exhausted.
  bool cap_hit() const { return cap_hit_; }

 private:
  const HoleTemplate& t_;
  std::vector<std::int64_t> constants_;
  std::size_t cap_;
  isa::BufferTable buffers_;
  std::vector<std::size_t> digits_;
  std::size_t total_ = 0, tried_ = 0, unparseable_ = 0;
  bool done_ = false, cap_hit_ = false;
};

enum class Mode : std::uint8_t { Llm, Enumerate, LlmThenEnumerate };
Mode parse_mode(std::string_view s);

enum class Outcome : std::uint8_t { Repaired, Exhausted, Aborted };
std::string_view outcome_name(Outcome o);

struct RepairStats {
  std::size_t candidates_tried = 0;
  std::size_t unparseable = 0;
  double verify_seconds = 0.0;
  bool cap_hit = false;
};

struct RepairResult {
  Outcome outcome = Outcome::Aborted;
  std::string program;
  std::map<std::string, std::int64_t> assignment;
  std::string reason;
  RepairStats stats;
};

inline const std::vector<std::int64_t>& default_constants() {
  static const std::vector<std::int64_t> c{0, 1, 3, 4, 12};
  return c;
}

struct RepairOptions {
  std::size_t cap = 10000;
  std::size_t max_holes = 5;
  int jobs = 1;
  /// Samples requested for the fill prompt.
  int llm_fill_samples = 1;
  llm::GenerationParams params;
  /// Translation conversation the candidate came from, if any.
  const prompts::Prompt* context = nullptr;
};

/// Enumerative fill of a manually marked template.
RepairResult repair_template(const HoleTemplate& t, const kernels::KernelSpec& spec,
                             const std::vector<kernels::TestCase>& cases, const std::vector<std::int64_t>& constants,
                             const RepairOptions& opts = {});

/// Full flow: the model marks holes, then fills come from the model, from
/// enumeration, or both. `backend` may be null only if the candidate passes.
RepairResult repair(const std::string& candidate, const kernels::KernelSpec& spec,
                    const std::vector<kernels::TestCase>& cases, const std::vector<std::int64_t>& constants, Mode mode,
                    llm::Backend* backend, const RepairOptions& opts = {});

}  // namespace talift::repair
