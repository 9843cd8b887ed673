#pragma once

// Accelerator instruction set: local address encoding, typed instructions and
// the parser/printer for the C-macro program dialect that LLM candidates and
// golden fixtures are written in.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace talift::isa {

// ---------------------------------------------------------------------------
// Local (scratchpad / accumulator) addresses
// ---------------------------------------------------------------------------

enum class Space : std::uint8_t { Scratchpad, Accumulator };

inline constexpr std::uint32_t kSentinelAddr = 0xffffffffu;
inline constexpr std::uint32_t kRowMask = (1u << 29) - 1;
inline constexpr std::uint32_t kAccumulateBit = 1u << 30;
inline constexpr std::uint32_t kFullWidthBit = 1u << 29;
inline constexpr std::uint32_t kAccumulatorBit = 1u << 31;

/// 32-bit private memory address. Bit 31 selects the accumulator, bit 30
/// requests accumulate-on-write, bit 29 requests a raw (full width) read and
/// bits 28..0 are the row.
struct LocalAddr {
  std::uint32_t raw = 0;

  constexpr Space space() const {
    return (raw & kAccumulatorBit) ? Space::Accumulator : Space::Scratchpad;
  }
  constexpr bool accumulate() const { return (raw & kAccumulateBit) != 0; }
  constexpr bool read_full_width() const { return (raw & kFullWidthBit) != 0; }
  constexpr std::uint32_t row() const { return raw & kRowMask; }
  /// KEEP (preload) and NONE (bias) share this value.
  constexpr bool is_sentinel() const { return raw == kSentinelAddr; }

  friend constexpr bool operator==(LocalAddr, LocalAddr) = default;
};

struct DecodedAddr {
  Space space = Space::Scratchpad;
  bool accumulate_on_write = false;
  bool read_full_width = false;
  std::uint32_t row = 0;

  friend bool operator==(const DecodedAddr&, const DecodedAddr&) = default;
};

LocalAddr encode_local_addr(Space space, bool accumulate_on_write, bool read_full_width,
                            std::uint64_t row);
DecodedAddr decode_local_addr(std::uint32_t raw);
LocalAddr encode_local_addr(const DecodedAddr& d);

// ---------------------------------------------------------------------------
// Instructions
// ---------------------------------------------------------------------------

enum class Dataflow : std::uint8_t { WeightStationary, OutputStationary };
enum class Activation : std::uint8_t { None, Relu, LayerNorm, IGelu, Softmax };

/// A DRAM operand: buffer plus an offset in 4-byte elements.
struct DramRef {
  std::string buffer;
  std::uint32_t element_offset = 0;

  friend bool operator==(const DramRef&, const DramRef&) = default;
};

struct ConfigEx {
  Dataflow dataflow = Dataflow::WeightStationary;
  Activation act = Activation::None;
  bool a_transpose = false;
  bool b_transpose = false;
  friend bool operator==(const ConfigEx&, const ConfigEx&) = default;
};

struct ConfigLd {
  std::uint32_t stride_bytes = 0;
  std::uint8_t channel = 0;
  friend bool operator==(const ConfigLd&, const ConfigLd&) = default;
};

struct ConfigSt {
  std::uint32_t stride_bytes = 0;
  friend bool operator==(const ConfigSt&, const ConfigSt&) = default;
};

struct Mvin {
  std::uint8_t channel = 0;
  DramRef dram;
  LocalAddr local;
  std::uint32_t cols = 0;
  std::uint32_t rows = 0;
  friend bool operator==(const Mvin&, const Mvin&) = default;
};

struct Preload {
  LocalAddr b;  // kSentinelAddr: keep the weights already latched
  LocalAddr c;
  std::uint32_t b_cols = 0, b_rows = 0, c_cols = 0, c_rows = 0;
  friend bool operator==(const Preload&, const Preload&) = default;
};

struct PreloadZeros {
  LocalAddr c;
  friend bool operator==(const PreloadZeros&, const PreloadZeros&) = default;
};

enum class ComputeMode : std::uint8_t { Preloaded, Accumulated };

struct Compute {
  ComputeMode mode = ComputeMode::Preloaded;
  LocalAddr a;
  LocalAddr d;  // kSentinelAddr: no bias
  std::uint32_t a_cols = 0, a_rows = 0, d_cols = 0, d_rows = 0;
  friend bool operator==(const Compute&, const Compute&) = default;
};

struct Mvout {
  DramRef dram;
  LocalAddr local;
  std::uint32_t cols = 0;
  std::uint32_t rows = 0;
  friend bool operator==(const Mvout&, const Mvout&) = default;
};

struct Fence {
  friend bool operator==(const Fence&, const Fence&) = default;
};

using Instruction =
    std::variant<ConfigEx, ConfigLd, ConfigSt, Mvin, Preload, PreloadZeros, Compute, Mvout, Fence>;

enum class InstrKind : std::uint8_t {
  ConfigEx,
  ConfigLd,
  ConfigSt,
  Mvin,
  Preload,
  PreloadZeros,
  ComputePreloaded,
  ComputeAccumulated,
  Mvout,
  Fence,
};

InstrKind kind_of(const Instruction& ins);
std::string_view kind_name(InstrKind k);
bool is_config(const Instruction& ins);

// ---------------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------------

enum class BufferRole : std::uint8_t { Input, Output, Bias };

struct BufferDecl {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  BufferRole role = BufferRole::Input;

  std::size_t elements() const { return std::size_t{rows} * cols; }
  friend bool operator==(const BufferDecl&, const BufferDecl&) = default;
};

using BufferTable = std::vector<BufferDecl>;

const BufferDecl* find_buffer(const BufferTable& table, std::string_view name);
std::string_view role_name(BufferRole r);
BufferRole parse_role(std::string_view s);

/// Straight-line program: all loops unrolled and operands folded.
struct Program {
  BufferTable buffers;
  std::vector<std::pair<std::string, std::uint32_t>> symbols;
  std::vector<Instruction> instructions;

  friend bool operator==(const Program&, const Program&) = default;
};

enum class IsaErrc : std::uint8_t {
  Syntax,
  UnknownFunction,
  UnboundSymbol,
  NonConstantLoopBound,
  RowsExceedDim,
  RowOutOfRange,
};

std::string_view errc_name(IsaErrc c);

class IsaError : public std::runtime_error {
 public:
  IsaError(IsaErrc code, int line, std::string detail,
           std::optional<std::size_t> instr_index = std::nullopt);

  IsaErrc code() const { return code_; }
  int line() const { return line_; }
  const std::string& detail() const { return detail_; }
  std::optional<std::size_t> instr_index() const { return instr_index_; }

 private:
  IsaErrc code_;
  int line_;
  std::string detail_;
  std::optional<std::size_t> instr_index_;
};

struct ParseOptions {
  /// When set, Mvin/Mvout with rows > dim are rejected at parse time.
  std::optional<std::uint32_t> dim;
  /// Accept identifiers used as DRAM operands even if absent from the buffer
  /// table. Used for syntax-only checks of raw completions.
  bool allow_undeclared_buffers = false;
  std::size_t max_instructions = 200000;
  std::size_t max_loop_iterations = 1000000;
};

Program parse_program(std::string_view text, const BufferTable& buffers,
                      const ParseOptions& options = {});

/// Rejects Mvin/Mvout whose rows exceed `dim`.
void validate_program(const Program& p, std::uint32_t dim);

std::string render_instruction(const Instruction& ins);
std::string render_program(const Program& p);

/// Renders a local address the way the printer does (decimal for small rows,
/// hex otherwise).
std::string render_local(LocalAddr a);

}  // namespace talift::isa
