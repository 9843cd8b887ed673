#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "talift/isa.hpp"
#include "talift/simulator.hpp"

namespace talift::cost {

struct CostParams {
  double issue_cost = 1.0;
  double dram_byte_cost = 0.25;
  double compute_row_cost = 1.0;
  /// Per preload; unset means DIM.
  std::optional<double> pipeline_fill;
};

struct CostBreakdown {
  double total = 0.0;
  std::size_t mvin = 0, mvout = 0, preload = 0, compute = 0, config = 0, fence = 0;
  std::uint64_t dram_bytes_in = 0, dram_bytes_out = 0;
  std::vector<double> per_instruction;

  std::size_t instructions() const { return per_instruction.size(); }
};

double instruction_cost(const isa::Instruction& ins, const CostParams& params,
                        const sim::MachineConfig& cfg);

/// Throws isa::IsaError(RowsExceedDim) when the program does not validate.
CostBreakdown program_cost(const isa::Program& p, const CostParams& params = {},
                           const sim::MachineConfig& cfg = {});

std::string render_feedback(const CostBreakdown& c,
                            const std::optional<CostBreakdown>& baseline = std::nullopt);

}  // namespace talift::cost
