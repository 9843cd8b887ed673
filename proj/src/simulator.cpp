#include "talift/simulator.hpp"

#include <fmt/format.h>

namespace talift::sim {

std::string_view errc_name(SimErrc c) {
  switch (c) {
    case SimErrc::ConfigInvalid: return "ConfigInvalid";
    case SimErrc::ShapeMismatch: return "ShapeMismatch";
    case SimErrc::UnknownBuffer: return "UnknownBuffer";
    case SimErrc::Unsupported: return "Unsupported";
    case SimErrc::RowsExceedDim: return "RowsExceedDim";
    case SimErrc::BlockTooWide: return "BlockTooWide";
    case SimErrc::SpadOutOfRange: return "SpadOutOfRange";
    case SimErrc::AccOutOfRange: return "AccOutOfRange";
    case SimErrc::DramOutOfRange: return "DramOutOfRange";
    case SimErrc::ComputeBeforePreload: return "ComputeBeforePreload";
    case SimErrc::DimensionMismatch: return "DimensionMismatch";
    case SimErrc::WrongAddressSpace: return "WrongAddressSpace";
  }
  return "?";
}

SimError::SimError(SimErrc code, std::string detail, std::optional<std::size_t> instr_index)
    : std::runtime_error(instr_index
                             ? fmt::format("{} at instruction {}: {}", errc_name(code), *instr_index, detail)
                             : fmt::format("{}: {}", errc_name(code), detail)),
      code_(code),
      detail_(std::move(detail)),
      instr_index_(instr_index) {}

void validate_config(const MachineConfig& cfg) {
  if (cfg.dim < 1) throw SimError(SimErrc::ConfigInvalid, "dim must be at least 1");
  if (cfg.spad_rows < cfg.dim) {
    throw SimError(SimErrc::ConfigInvalid,
                   fmt::format("spad_rows {} is smaller than dim {}", cfg.spad_rows, cfg.dim));
  }
  if (cfg.acc_rows < cfg.dim) {
    throw SimError(SimErrc::ConfigInvalid,
                   fmt::format("acc_rows {} is smaller than dim {}", cfg.acc_rows, cfg.dim));
  }
  if (cfg.max_block_len < 1) throw SimError(SimErrc::ConfigInvalid, "max_block_len must be at least 1");
}

Machine create_machine(const MachineConfig& cfg, const isa::BufferTable& buffers,
                       const std::map<std::string, Matrix>& contents) {
  validate_config(cfg);
  Machine m;
  m.config = cfg;
  m.spad.assign(std::size_t{cfg.spad_rows} * cfg.dim, 0.0f);
  m.acc.assign(std::size_t{cfg.acc_rows} * cfg.dim, 0.0f);
  for (const auto& b : buffers) {
    auto it = contents.find(b.name);
    if (it == contents.end()) {
      m.dram[b.name] = Matrix(b.rows, b.cols);
      continue;
    }
    if (it->second.rows != b.rows || it->second.cols != b.cols) {
      throw SimError(SimErrc::ShapeMismatch,
                     fmt::format("buffer {} declared {}x{} but bound to {}x{}", b.name, b.rows, b.cols,
                                 it->second.rows, it->second.cols));
    }
    m.dram[b.name] = it->second;
  }
  for (const auto& [name, _] : contents) {
    if (!isa::find_buffer(buffers, name)) {
      throw SimError(SimErrc::UnknownBuffer, fmt::format("contents given for undeclared buffer {}", name));
    }
  }
  return m;
}

namespace {

struct Exec {
  Machine& m;
  std::size_t index;

  [[noreturn]] void fail(SimErrc c, std::string detail) const { throw SimError(c, std::move(detail), index); }

  std::uint32_t dim() const { return m.config.dim; }

  Matrix& buffer(const std::string& name) {
    auto it = m.dram.find(name);
    if (it == m.dram.end()) fail(SimErrc::UnknownBuffer, fmt::format("buffer {} is not bound", name));
    return it->second;
  }

  void check_rows(isa::LocalAddr a, std::uint64_t first, std::uint64_t count) {
    if (a.space() == isa::Space::Scratchpad) {
      if (first + count > m.config.spad_rows) {
        fail(SimErrc::SpadOutOfRange,
             fmt::format("scratchpad rows [{}, {}) exceed {}", first, first + count, m.config.spad_rows));
      }
    } else if (first + count > m.config.acc_rows) {
      fail(SimErrc::AccOutOfRange,
           fmt::format("accumulator rows [{}, {}) exceed {}", first, first + count, m.config.acc_rows));
    }
  }

  std::uint32_t stride_elements(std::uint32_t stride_bytes) {
    if (stride_bytes % 4 != 0) {
      fail(SimErrc::Unsupported, fmt::format("stride {} is not a multiple of the element size", stride_bytes));
    }
    return stride_bytes / 4;
  }

  void check_move(std::uint32_t cols, std::uint32_t rows) {
    if (rows > dim()) fail(SimErrc::RowsExceedDim, fmt::format("rows {} exceeds DIM {}", rows, dim()));
    if (cols > dim() * m.config.max_block_len) {
      fail(SimErrc::BlockTooWide,
           fmt::format("cols {} exceeds {} (DIM x max_block_len)", cols, dim() * m.config.max_block_len));
    }
  }

  // Reads a rows x cols block from the scratchpad.
  Matrix read_spad(isa::LocalAddr a, std::uint32_t cols, std::uint32_t rows, std::string_view what) {
    if (a.space() != isa::Space::Scratchpad) {
      fail(SimErrc::WrongAddressSpace, fmt::format("{} must address the scratchpad", what));
    }
    check_rows(a, a.row(), rows);
    Matrix out(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) out(r, c) = m.spad_at(a.row() + r, c);
    }
    return out;
  }

  void check_dims(std::initializer_list<std::uint32_t> dims, std::string_view what) {
    for (auto d : dims) {
      if (d > dim()) fail(SimErrc::DimensionMismatch, fmt::format("{} dimension {} exceeds DIM {}", what, d, dim()));
    }
  }

  void operator()(const isa::ConfigEx& c) {
    if (c.dataflow != isa::Dataflow::WeightStationary) {
      fail(SimErrc::Unsupported, "OUTPUT_STATIONARY dataflow is not supported");
    }
    if (c.act != isa::Activation::None && c.act != isa::Activation::Relu) {
      fail(SimErrc::Unsupported, "only NO_ACTIVATION and RELU are supported");
    }
    m.regs.dataflow = c.dataflow;
    m.regs.act = c.act;
    m.regs.a_transpose = c.a_transpose;
    m.regs.b_transpose = c.b_transpose;
  }

  void operator()(const isa::ConfigLd& c) { m.regs.ld_stride_bytes[c.channel] = c.stride_bytes; }
  void operator()(const isa::ConfigSt& c) { m.regs.st_stride_bytes = c.stride_bytes; }

  void operator()(const isa::Mvin& mv) {
    check_move(mv.cols, mv.rows);
    std::uint32_t stride = stride_elements(m.regs.ld_stride_bytes[mv.channel]);
    Matrix& src = buffer(mv.dram.buffer);
    std::uint32_t tiles = (mv.cols + dim() - 1) / dim();
    check_rows(mv.local, mv.local.row(), std::uint64_t{tiles - 1} * dim() + mv.rows);
    bool to_acc = mv.local.space() == isa::Space::Accumulator;
    for (std::uint32_t t = 0; t < tiles; ++t) {
      std::uint32_t width = std::min(dim(), mv.cols - t * dim());
      for (std::uint32_t r = 0; r < mv.rows; ++r) {
        for (std::uint32_t c = 0; c < width; ++c) {
          std::uint64_t e = std::uint64_t{mv.dram.element_offset} + std::uint64_t{r} * stride + t * dim() + c;
          if (e >= src.data.size()) {
            fail(SimErrc::DramOutOfRange,
                 fmt::format("element {} of {} is outside its {} elements", e, mv.dram.buffer, src.data.size()));
          }
          float v = src.data[e];
          std::uint32_t row = mv.local.row() + t * dim() + r;
          if (to_acc) {
            float& cell = m.acc_at(row, c);
            cell = mv.local.accumulate() ? cell + v : v;
          } else {
            m.spad_at(row, c) = v;
          }
        }
      }
      m.elements_in += std::uint64_t{width} * mv.rows;
    }
  }

  void operator()(const isa::Preload& p) {
    check_dims({p.b_cols, p.b_rows, p.c_cols, p.c_rows}, "preload");
    Matrix weights;
    if (p.b.is_sentinel()) {
      if (!m.latched) fail(SimErrc::ComputeBeforePreload, "preload keeps weights but none are latched");
      weights = m.latched->weights;
    } else {
      Matrix raw = read_spad(p.b, p.b_cols, p.b_rows, "preload B address");
      if (m.regs.b_transpose) {
        weights = Matrix(raw.cols, raw.rows);
        for (std::size_t r = 0; r < raw.rows; ++r) {
          for (std::size_t c = 0; c < raw.cols; ++c) weights(c, r) = raw(r, c);
        }
      } else {
        weights = std::move(raw);
      }
    }
    latch_output(p.c, p.c_cols, p.c_rows);
    m.latched->weights = std::move(weights);
  }

  void latch_output(isa::LocalAddr c, std::uint32_t cols, std::uint32_t rows) {
    if (!c.is_sentinel()) {
      if (c.space() != isa::Space::Accumulator) {
        fail(SimErrc::WrongAddressSpace, "output address C must address the accumulator");
      }
      check_rows(c, c.row(), rows);
    }
    if (!m.latched) m.latched.emplace();
    m.latched->c = c;
    m.latched->c_cols = cols;
    m.latched->c_rows = rows;
  }

  void operator()(const isa::PreloadZeros& p) {
    latch_output(p.c, dim(), dim());
    m.latched->weights = Matrix(dim(), dim());
  }

  void operator()(const isa::Compute& c) {
    if (!m.latched) fail(SimErrc::ComputeBeforePreload, "B must be preloaded before compute");
    check_dims({c.a_cols, c.a_rows, c.d_cols, c.d_rows}, "compute");
    Matrix a_raw = read_spad(c.a, c.a_cols, c.a_rows, "compute A address");
    Matrix a = a_raw;
    if (m.regs.a_transpose) {
      a = Matrix(a_raw.cols, a_raw.rows);
      for (std::size_t r = 0; r < a_raw.rows; ++r) {
        for (std::size_t k = 0; k < a_raw.cols; ++k) a(k, r) = a_raw(r, k);
      }
    }
    const Matrix& w = m.latched->weights;
    if (a.cols != w.rows) {
      fail(SimErrc::DimensionMismatch,
           fmt::format("A is {}x{} but the preloaded weights are {}x{}", a.rows, a.cols, w.rows, w.cols));
    }
    const Latched& l = *m.latched;
    if (a.rows != l.c_rows || w.cols != l.c_cols) {
      fail(SimErrc::DimensionMismatch,
           fmt::format("result is {}x{} but the preloaded output is {}x{}", a.rows, w.cols, l.c_rows, l.c_cols));
    }
    Matrix out(a.rows, w.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t j = 0; j < w.cols; ++j) {
        float s = 0.0f;
        for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * w(k, j);
        out(i, j) = s;
      }
    }
    if (!c.d.is_sentinel()) {
      Matrix d = read_spad(c.d, c.d_cols, c.d_rows, "compute D address");
      if (!d.same_shape(out)) {
        fail(SimErrc::DimensionMismatch,
             fmt::format("bias is {}x{} but the result is {}x{}", d.rows, d.cols, out.rows, out.cols));
      }
      for (std::size_t e = 0; e < out.data.size(); ++e) out.data[e] += d.data[e];
    }
    if (l.c.is_sentinel()) return;
    bool add = c.mode == isa::ComputeMode::Accumulated || l.c.accumulate();
    for (std::uint32_t r = 0; r < out.rows; ++r) {
      for (std::uint32_t col = 0; col < out.cols; ++col) {
        float& cell = m.acc_at(l.c.row() + r, col);
        cell = add ? cell + out(r, col) : out(r, col);
      }
    }
  }

  void operator()(const isa::Mvout& mv) {
    check_move(mv.cols, mv.rows);
    if (mv.local.space() != isa::Space::Accumulator) {
      fail(SimErrc::WrongAddressSpace, "mvout must read from the accumulator");
    }
    std::uint32_t stride = stride_elements(m.regs.st_stride_bytes);
    Matrix& dst = buffer(mv.dram.buffer);
    std::uint32_t tiles = (mv.cols + dim() - 1) / dim();
    check_rows(mv.local, mv.local.row(), std::uint64_t{tiles - 1} * dim() + mv.rows);
    bool activate = !mv.local.read_full_width() && m.regs.act == isa::Activation::Relu;
    for (std::uint32_t t = 0; t < tiles; ++t) {
      std::uint32_t width = std::min(dim(), mv.cols - t * dim());
      for (std::uint32_t r = 0; r < mv.rows; ++r) {
        for (std::uint32_t c = 0; c < width; ++c) {
          std::uint64_t e = std::uint64_t{mv.dram.element_offset} + std::uint64_t{r} * stride + t * dim() + c;
          if (e >= dst.data.size()) {
            fail(SimErrc::DramOutOfRange,
                 fmt::format("element {} of {} is outside its {} elements", e, mv.dram.buffer, dst.data.size()));
          }
          float v = m.acc_at(mv.local.row() + t * dim() + r, c);
          dst.data[e] = activate && v < 0.0f ? 0.0f : v;
        }
      }
      m.elements_out += std::uint64_t{width} * mv.rows;
    }
  }

  void operator()(const isa::Fence&) {}
};

}  // namespace

void step(Machine& m, const isa::Instruction& ins, std::size_t index) {
  std::visit(Exec{m, index}, ins);
}

void execute(Machine& m, const isa::Program& p) {
  for (std::size_t i = 0; i < p.instructions.size(); ++i) step(m, p.instructions[i], i);
}

Matrix read_output(const Machine& m, const std::string& buffer) {
  auto it = m.dram.find(buffer);
  if (it == m.dram.end()) throw SimError(SimErrc::UnknownBuffer, fmt::format("unknown buffer {}", buffer));
  return it->second;
}

}  // namespace talift::sim
