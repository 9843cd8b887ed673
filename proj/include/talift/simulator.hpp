#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "talift/isa.hpp"
#include "talift/matrix.hpp"

namespace talift::sim {

struct MachineConfig {
  std::uint32_t dim = 4;
  std::uint32_t spad_rows = 1024;
  std::uint32_t acc_rows = 256;
  std::uint32_t max_block_len = 4;
};

enum class SimErrc : std::uint8_t {
  ConfigInvalid,
  ShapeMismatch,
  UnknownBuffer,
  Unsupported,
  RowsExceedDim,
  BlockTooWide,
  SpadOutOfRange,
  AccOutOfRange,
  DramOutOfRange,
  ComputeBeforePreload,
  DimensionMismatch,
  WrongAddressSpace,
};

std::string_view errc_name(SimErrc c);

class SimError : public std::runtime_error {
 public:
  SimError(SimErrc code, std::string detail, std::optional<std::size_t> instr_index = std::nullopt);

  SimErrc code() const { return code_; }
  const std::string& detail() const { return detail_; }
  std::optional<std::size_t> instr_index() const { return instr_index_; }

 private:
  SimErrc code_;
  std::string detail_;
  std::optional<std::size_t> instr_index_;
};

struct Registers {
  isa::Dataflow dataflow = isa::Dataflow::WeightStationary;
  isa::Activation act = isa::Activation::None;
  bool a_transpose = false;
  bool b_transpose = false;
  std::uint32_t ld_stride_bytes[3] = {0, 0, 0};
  std::uint32_t st_stride_bytes = 0;

  friend bool operator==(const Registers&, const Registers&) = default;
};

struct Latched {
  Matrix weights;  // effective (post-transpose) extent of the preloaded block
  isa::LocalAddr c;
  std::uint32_t c_cols = 0;
  std::uint32_t c_rows = 0;

  friend bool operator==(const Latched&, const Latched&) = default;
};

struct Machine {
  MachineConfig config;
  std::map<std::string, Matrix> dram;
  std::vector<float> spad;  // spad_rows x dim
  std::vector<float> acc;   // acc_rows x dim
  Registers regs;
  std::optional<Latched> latched;
  std::uint64_t elements_in = 0;
  std::uint64_t elements_out = 0;

  float& spad_at(std::uint32_t row, std::uint32_t col) { return spad[std::size_t{row} * config.dim + col]; }
  float& acc_at(std::uint32_t row, std::uint32_t col) { return acc[std::size_t{row} * config.dim + col]; }

  friend bool operator==(const Machine& a, const Machine& b) {
    return a.config.dim == b.config.dim && a.config.spad_rows == b.config.spad_rows &&
           a.config.acc_rows == b.config.acc_rows &&
           a.config.max_block_len == b.config.max_block_len && a.dram == b.dram &&
           a.spad == b.spad && a.acc == b.acc && a.regs == b.regs && a.latched == b.latched &&
           a.elements_in == b.elements_in && a.elements_out == b.elements_out;
  }
};

void validate_config(const MachineConfig& cfg);

/// Buffers without an entry in `contents` start zeroed.
Machine create_machine(const MachineConfig& cfg, const isa::BufferTable& buffers,
                       const std::map<std::string, Matrix>& contents = {});

/// Runs `p` to completion. Errors carry the failing instruction index.
void execute(Machine& m, const isa::Program& p);

/// Executes a single instruction; `index` is used for error reporting.
void step(Machine& m, const isa::Instruction& ins, std::size_t index);

Matrix read_output(const Machine& m, const std::string& buffer);

}  // namespace talift::sim
