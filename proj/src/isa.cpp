#include "talift/isa.hpp"

#include <fmt/format.h>

#include <sstream>

namespace talift::isa {

LocalAddr encode_local_addr(Space space, bool accumulate_on_write, bool read_full_width,
                            std::uint64_t row) {
  if (row > kRowMask) {
    throw IsaError(IsaErrc::RowOutOfRange, 0, fmt::format("row {} does not fit in 29 bits", row));
  }
  std::uint32_t raw = static_cast<std::uint32_t>(row);
  if (space == Space::Accumulator) raw |= kAccumulatorBit;
  if (accumulate_on_write) raw |= kAccumulateBit;
  if (read_full_width) raw |= kFullWidthBit;
  return LocalAddr{raw};
}

LocalAddr encode_local_addr(const DecodedAddr& d) {
  return encode_local_addr(d.space, d.accumulate_on_write, d.read_full_width, d.row);
}

DecodedAddr decode_local_addr(std::uint32_t raw) {
  LocalAddr a{raw};
  return DecodedAddr{a.space(), a.accumulate(), a.read_full_width(), a.row()};
}

InstrKind kind_of(const Instruction& ins) {
  struct Visitor {
    InstrKind operator()(const ConfigEx&) const { return InstrKind::ConfigEx; }
    InstrKind operator()(const ConfigLd&) const { return InstrKind::ConfigLd; }
    InstrKind operator()(const ConfigSt&) const { return InstrKind::ConfigSt; }
    InstrKind operator()(const Mvin&) const { return InstrKind::Mvin; }
    InstrKind operator()(const Preload&) const { return InstrKind::Preload; }
    InstrKind operator()(const PreloadZeros&) const { return InstrKind::PreloadZeros; }
    InstrKind operator()(const Compute& c) const {
      return c.mode == ComputeMode::Preloaded ? InstrKind::ComputePreloaded
                                              : InstrKind::ComputeAccumulated;
    }
    InstrKind operator()(const Mvout&) const { return InstrKind::Mvout; }
    InstrKind operator()(const Fence&) const { return InstrKind::Fence; }
  };
  return std::visit(Visitor{}, ins);
}

std::string_view kind_name(InstrKind k) {
  switch (k) {
    case InstrKind::ConfigEx: return "config_ex";
    case InstrKind::ConfigLd: return "config_ld";
    case InstrKind::ConfigSt: return "config_st";
    case InstrKind::Mvin: return "mvin";
    case InstrKind::Preload: return "preload";
    case InstrKind::PreloadZeros: return "preload_zeros";
    case InstrKind::ComputePreloaded: return "compute_preloaded";
    case InstrKind::ComputeAccumulated: return "compute_accumulated";
    case InstrKind::Mvout: return "mvout";
    case InstrKind::Fence: return "fence";
  }
  return "?";
}

bool is_config(const Instruction& ins) {
  return std::holds_alternative<ConfigEx>(ins) || std::holds_alternative<ConfigLd>(ins) ||
         std::holds_alternative<ConfigSt>(ins);
}

const BufferDecl* find_buffer(const BufferTable& table, std::string_view name) {
  for (const auto& b : table) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::string_view role_name(BufferRole r) {
  switch (r) {
    case BufferRole::Input: return "input";
    case BufferRole::Output: return "output";
    case BufferRole::Bias: return "bias";
  }
  return "input";
}

BufferRole parse_role(std::string_view s) {
  if (s == "input") return BufferRole::Input;
  if (s == "output") return BufferRole::Output;
  if (s == "bias") return BufferRole::Bias;
  throw std::invalid_argument(fmt::format("unknown buffer role '{}'", s));
}

std::string_view errc_name(IsaErrc c) {
  switch (c) {
    case IsaErrc::Syntax: return "SyntaxError";
    case IsaErrc::UnknownFunction: return "UnknownFunction";
    case IsaErrc::UnboundSymbol: return "UnboundSymbol";
    case IsaErrc::NonConstantLoopBound: return "NonConstantLoopBound";
    case IsaErrc::RowsExceedDim: return "RowsExceedDim";
    case IsaErrc::RowOutOfRange: return "RowOutOfRange";
  }
  return "?";
}

IsaError::IsaError(IsaErrc code, int line, std::string detail,
                   std::optional<std::size_t> instr_index)
    : std::runtime_error(line > 0 ? fmt::format("{} (line {}): {}", errc_name(code), line, detail)
                                  : fmt::format("{}: {}", errc_name(code), detail)),
      code_(code),
      line_(line),
      detail_(std::move(detail)),
      instr_index_(instr_index) {}

void validate_program(const Program& p, std::uint32_t dim) {
  for (std::size_t i = 0; i < p.instructions.size(); ++i) {
    std::uint32_t rows = 0;
    if (const auto* mv = std::get_if<Mvin>(&p.instructions[i])) rows = mv->rows;
    if (const auto* mo = std::get_if<Mvout>(&p.instructions[i])) rows = mo->rows;
    if (rows > dim) {
      throw IsaError(IsaErrc::RowsExceedDim, 0,
                     fmt::format("instruction {} moves {} rows, DIM is {}", i, rows, dim), i);
    }
  }
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

namespace {

std::string render_u32(std::uint32_t v) {
  if (v < 0x10000u) return std::to_string(v);
  return fmt::format("0x{:x}", v);
}

std::string render_dram(const DramRef& d) {
  if (d.element_offset == 0) return d.buffer;
  return fmt::format("{} + {}", d.buffer, d.element_offset);
}

std::string_view dataflow_name(Dataflow d) {
  return d == Dataflow::WeightStationary ? "WEIGHT_STATIONARY" : "OUTPUT_STATIONARY";
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::None: return "NO_ACTIVATION";
    case Activation::Relu: return "RELU";
    case Activation::LayerNorm: return "LAYERNORM";
    case Activation::IGelu: return "IGELU";
    case Activation::Softmax: return "SOFTMAX";
  }
  return "NO_ACTIVATION";
}

}  // namespace

std::string render_local(LocalAddr a) { return render_u32(a.raw); }

std::string render_instruction(const Instruction& ins) {
  struct Visitor {
    std::string operator()(const ConfigEx& c) const {
      return fmt::format("config_ex({}, {}, {}, {});", dataflow_name(c.dataflow),
                         activation_name(c.act), c.a_transpose, c.b_transpose);
    }
    std::string operator()(const ConfigLd& c) const {
      return fmt::format("config_ld({}, {});", c.stride_bytes, c.channel);
    }
    std::string operator()(const ConfigSt& c) const {
      return fmt::format("config_st({});", c.stride_bytes);
    }
    std::string operator()(const Mvin& m) const {
      std::string_view name = m.channel == 0 ? "mvin" : (m.channel == 1 ? "mvin2" : "mvin3");
      return fmt::format("{}({}, {}, {}, {});", name, render_dram(m.dram), render_local(m.local),
                         m.cols, m.rows);
    }
    std::string operator()(const Preload& p) const {
      return fmt::format("preload({}, {}, {}, {}, {}, {});", render_local(p.b), render_local(p.c),
                         p.b_cols, p.b_rows, p.c_cols, p.c_rows);
    }
    std::string operator()(const PreloadZeros& p) const {
      return fmt::format("preload_zeros({});", render_local(p.c));
    }
    std::string operator()(const Compute& c) const {
      return fmt::format("{}({}, {}, {}, {}, {}, {});",
                         c.mode == ComputeMode::Preloaded ? "compute_preloaded"
                                                          : "compute_accumulated",
                         render_local(c.a), render_local(c.d), c.a_cols, c.a_rows, c.d_cols,
                         c.d_rows);
    }
    std::string operator()(const Mvout& m) const {
      return fmt::format("mvout({}, {}, {}, {});", render_dram(m.dram), render_local(m.local),
                         m.cols, m.rows);
    }
    std::string operator()(const Fence&) const { return "fence();"; }
  };
  return std::visit(Visitor{}, ins);
}

std::string render_program(const Program& p) {
  std::ostringstream os;
  for (const auto& [name, value] : p.symbols) {
    os << "static uint32_t " << name << " = " << render_u32(value) << ";\n";
  }
  for (const auto& ins : p.instructions) os << render_instruction(ins) << '\n';
  return os.str();
}

}  // namespace talift::isa
