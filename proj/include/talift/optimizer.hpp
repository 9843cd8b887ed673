#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "talift/cost_model.hpp"
#include "talift/gateway.hpp"
#include "talift/isa.hpp"
#include "talift/kernels.hpp"
#include "talift/simulator.hpp"

namespace talift::opt {

/// Half-open [lo, hi) intervals.
class IntervalSet {
 public:
  void add(std::int64_t lo, std::int64_t hi);
  bool overlaps(const IntervalSet& o) const;
  bool overlaps(std::int64_t lo, std::int64_t hi) const;
  bool empty() const { return iv_.empty(); }
  void merge(const IntervalSet& o);
  const std::vector<std::pair<std::int64_t, std::int64_t>>& intervals() const { return iv_; }

 private:
  std::vector<std::pair<std::int64_t, std::int64_t>> iv_;
};

/// Resources touched. Registers are "ex", "ld0".."ld2", "st" and "latch"
/// (the preloaded weights and output address).
struct Footprint {
  IntervalSet spad_r, spad_w, acc_r, acc_w;
  std::map<std::string, IntervalSet> dram_r, dram_w;
  std::set<std::string> reg_r, reg_w;
  bool barrier = false;
};

/// Per-instruction footprints from a forward walk of the program.
std::vector<Footprint> instruction_footprints(const isa::Program& p, const sim::MachineConfig& cfg = {});

struct Block {
  int id = 0;
  std::size_t first = 0;  // index of the first instruction in the source program
  std::vector<isa::Instruction> instructions;
  /// Register reads only count when no earlier write in the block covers them.
  Footprint footprint;
  bool prelude = false;
};

/// Leading config instructions form a prelude block; a block starts at each
/// preload, taking the loads that feed it; trailing stores and the fence join
/// the last block.
std::vector<Block> segment_blocks(const isa::Program& p, const sim::MachineConfig& cfg = {});

/// Recomputes footprints for blocks laid out contiguously as in `p`.
void refresh_footprints(const isa::Program& p, std::vector<Block>& blocks, const sim::MachineConfig& cfg = {});

using Edge = std::pair<int, int>;
std::set<Edge> analyze_dependences(const std::vector<Block>& blocks);

isa::Program reassemble(const isa::Program& original, const std::vector<Block>& blocks,
                        const std::vector<int>& order);

enum class PlanSource : std::uint8_t { Search, Llm, Identity };

struct OrderingPlan {
  std::vector<int> order;
  PlanSource source = PlanSource::Search;
};

class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when `order` is a permutation of 0..n-1 respecting every edge.
bool respects(const std::vector<int>& order, std::size_t n, const std::set<Edge>& edges);

/// Peephole rules on an instruction stream:
///   a. drop a preload identical to the previous surviving one while its
///      weights are untouched,
///   b. drop an mvin identical to an earlier one while its rows, its source
///      and its stride are unchanged,
///   c. re-latch unchanged weights with KEEP.
/// Compute instructions are never removed.
std::vector<isa::Instruction> peephole(const std::vector<isa::Instruction>& in, const sim::MachineConfig& cfg = {});
Block peephole_block(const Block& b, const sim::MachineConfig& cfg = {});

/// Exhaustive for up to 8 blocks (smallest permutation wins ties), greedy
/// list scheduling beyond. The objective is the cost after cross-block
/// peephole. Throws OptimizerError on cyclic edges.
OrderingPlan search_reorder(const isa::Program& original, const std::vector<Block>& blocks,
                            const std::set<Edge>& edges, const cost::CostParams& params = {},
                            const sim::MachineConfig& cfg = {});

/// Reads "Block N" labels (or a bare list of numbers) from a reply.
std::optional<std::vector<int>> parse_plan(std::string_view reply, std::size_t n);

enum class Mode : std::uint8_t { Rules, Llm, LlmThenRules };
Mode parse_mode(std::string_view s);

struct OptimizeOptions {
  cost::CostParams cost;
  sim::MachineConfig machine;
  llm::GenerationParams params;
  std::vector<std::string> heuristics;  // empty: the shipped defaults
  bool use_default_heuristics = true;
};

struct StageLog {
  std::string stage;
  bool accepted = false;
  std::string note;
};

struct OptimizeResult {
  isa::Program program;
  cost::CostBreakdown before, after;
  OrderingPlan plan;
  std::vector<StageLog> log;
  bool changed = false;
};

/// Every stage is verified against `cases` and falls back to its input on
/// failure; the result is never costlier than the input.
OptimizeResult optimize_program(const isa::Program& p, const kernels::KernelSpec& spec,
                                const std::vector<kernels::TestCase>& cases, Mode mode,
                                llm::Backend* backend = nullptr, const OptimizeOptions& opts = {});

std::string render_block(const Block& b);

}  // namespace talift::opt
