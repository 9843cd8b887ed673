#include "talift/cost_model.hpp"

#include <fmt/format.h>

namespace talift::cost {

double instruction_cost(const isa::Instruction& ins, const CostParams& params,
                        const sim::MachineConfig& cfg) {
  double c = params.issue_cost;
  if (const auto* m = std::get_if<isa::Mvin>(&ins)) {
    c += params.dram_byte_cost * 4.0 * m->cols * m->rows;
  } else if (const auto* o = std::get_if<isa::Mvout>(&ins)) {
    c += params.dram_byte_cost * 4.0 * o->cols * o->rows;
  } else if (std::holds_alternative<isa::Preload>(ins) || std::holds_alternative<isa::PreloadZeros>(ins)) {
    c += params.pipeline_fill.value_or(cfg.dim);
  } else if (const auto* k = std::get_if<isa::Compute>(&ins)) {
    c += params.compute_row_cost * k->a_rows;
  }
  return c;
}

CostBreakdown program_cost(const isa::Program& p, const CostParams& params,
                           const sim::MachineConfig& cfg) {
  isa::validate_program(p, cfg.dim);
  CostBreakdown b;
  for (const auto& ins : p.instructions) {
    double c = instruction_cost(ins, params, cfg);
    b.per_instruction.push_back(c);
    b.total += c;
    switch (isa::kind_of(ins)) {
      case isa::InstrKind::Mvin: {
        const auto& m = std::get<isa::Mvin>(ins);
        ++b.mvin;
        b.dram_bytes_in += 4ull * m.cols * m.rows;
        break;
      }
      case isa::InstrKind::Mvout: {
        const auto& m = std::get<isa::Mvout>(ins);
        ++b.mvout;
        b.dram_bytes_out += 4ull * m.cols * m.rows;
        break;
      }
      case isa::InstrKind::Preload:
      case isa::InstrKind::PreloadZeros: ++b.preload; break;
      case isa::InstrKind::ComputePreloaded:
      case isa::InstrKind::ComputeAccumulated: ++b.compute; break;
      case isa::InstrKind::ConfigEx:
      case isa::InstrKind::ConfigLd:
      case isa::InstrKind::ConfigSt: ++b.config; break;
      case isa::InstrKind::Fence: ++b.fence; break;
    }
  }
  return b;
}

std::string render_feedback(const CostBreakdown& c, const std::optional<CostBreakdown>& baseline) {
  std::string out = fmt::format("estimated cost: {:g}\n", c.total);
  out += fmt::format("instructions: {} (mvin {}, mvout {}, preload {}, compute {}, config {}, fence {})\n",
                     c.instructions(), c.mvin, c.mvout, c.preload, c.compute, c.config, c.fence);
  out += fmt::format("dram bytes: in {}, out {}\n", c.dram_bytes_in, c.dram_bytes_out);
  if (baseline) {
    out += fmt::format("Δtotal: {:+g}\n", c.total - baseline->total);
    auto moved = static_cast<long long>(c.dram_bytes_in + c.dram_bytes_out);
    auto base_moved = static_cast<long long>(baseline->dram_bytes_in + baseline->dram_bytes_out);
    out += fmt::format("Δdram bytes: {:+d}\n", moved - base_moved);
  }
  return out;
}

}  // namespace talift::cost
