#include "talift/optimizer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <limits>
#include <regex>

#include "talift/eval.hpp"
#include "talift/prompts.hpp"

namespace talift::opt {

namespace {

constexpr std::int64_t kWhole = std::numeric_limits<std::int64_t>::max();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::int64_t tiles(std::uint32_t cols, std::uint32_t dim) { return cols == 0 ? 1 : (cols + dim - 1) / dim; }

// rows touched by a (possibly wide) transfer
std::pair<std::int64_t, std::int64_t> local_rows(isa::LocalAddr a, std::uint32_t cols, std::uint32_t rows,
                                                 std::uint32_t dim) {
  std::int64_t lo = a.row();
  return {lo, lo + (tiles(cols, dim) - 1) * dim + rows};
}

std::pair<std::int64_t, std::int64_t> dram_span(const isa::DramRef& d, std::optional<std::uint32_t> stride_bytes,
                                                std::uint32_t cols, std::uint32_t rows) {
  if (!stride_bytes) return {0, kWhole};
  std::int64_t lo = d.element_offset;
  std::int64_t stride = *stride_bytes / 4;
  return {lo, lo + (static_cast<std::int64_t>(rows) - 1) * stride + cols};
}

bool is_preload(const isa::Instruction& i) {
  return std::holds_alternative<isa::Preload>(i) || std::holds_alternative<isa::PreloadZeros>(i);
}

void add_local(Footprint& f, isa::LocalAddr a, std::pair<std::int64_t, std::int64_t> rows, bool write) {
  auto& set = a.space() == isa::Space::Accumulator ? (write ? f.acc_w : f.acc_r) : (write ? f.spad_w : f.spad_r);
  set.add(rows.first, rows.second);
}

struct LatchedC {
  isa::LocalAddr c;
  std::uint32_t rows = 0;
};

}  // namespace

void IntervalSet::add(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return;
  iv_.emplace_back(lo, hi);
}

bool IntervalSet::overlaps(std::int64_t lo, std::int64_t hi) const {
  for (const auto& [a, b] : iv_) {
    if (a < hi && lo < b) return true;
  }
  return false;
}

bool IntervalSet::overlaps(const IntervalSet& o) const {
  for (const auto& [a, b] : o.iv_) {
    if (overlaps(a, b)) return true;
  }
  return false;
}

void IntervalSet::merge(const IntervalSet& o) { iv_.insert(iv_.end(), o.iv_.begin(), o.iv_.end()); }

std::vector<Footprint> instruction_footprints(const isa::Program& p, const sim::MachineConfig& cfg) {
  std::array<std::optional<std::uint32_t>, 3> ld;
  std::optional<std::uint32_t> st;
  std::optional<LatchedC> latched;
  std::vector<Footprint> out;
  for (const auto& ins : p.instructions) {
    Footprint f;
    std::visit(overloaded{
                   [&](const isa::ConfigEx&) { f.reg_w.insert("ex"); },
                   [&](const isa::ConfigLd& c) {
                     f.reg_w.insert(fmt::format("ld{}", c.channel));
                     if (c.channel < 3) ld[c.channel] = c.stride_bytes;
                   },
                   [&](const isa::ConfigSt& c) {
                     f.reg_w.insert("st");
                     st = c.stride_bytes;
                   },
                   [&](const isa::Mvin& m) {
                     f.reg_r.insert(fmt::format("ld{}", m.channel));
                     auto span = dram_span(m.dram, m.channel < 3 ? ld[m.channel] : std::nullopt, m.cols, m.rows);
                     f.dram_r[m.dram.buffer].add(span.first, span.second);
                     auto rows = local_rows(m.local, m.cols, m.rows, cfg.dim);
                     add_local(f, m.local, rows, true);
                     if (m.local.space() == isa::Space::Accumulator && m.local.accumulate()) {
                       add_local(f, m.local, rows, false);
                     }
                   },
                   [&](const isa::Mvout& m) {
                     f.reg_r.insert("st");
                     f.reg_r.insert("ex");
                     add_local(f, m.local, local_rows(m.local, m.cols, m.rows, cfg.dim), false);
                     auto span = dram_span(m.dram, st, m.cols, m.rows);
                     f.dram_w[m.dram.buffer].add(span.first, span.second);
                   },
                   [&](const isa::Preload& pl) {
                     f.reg_r.insert("ex");
                     if (pl.b.is_sentinel()) {
                       f.reg_r.insert("latch");
                     } else {
                       add_local(f, pl.b, {pl.b.row(), pl.b.row() + pl.b_rows}, false);
                     }
                     f.reg_w.insert("latch");
                     latched = LatchedC{pl.c, pl.c_rows};
                   },
                   [&](const isa::PreloadZeros& pz) {
                     f.reg_w.insert("latch");
                     latched = LatchedC{pz.c, cfg.dim};
                   },
                   [&](const isa::Compute& c) {
                     f.reg_r.insert("latch");
                     f.reg_r.insert("ex");
                     add_local(f, c.a, {c.a.row(), c.a.row() + c.a_rows}, false);
                     if (!c.d.is_sentinel()) add_local(f, c.d, {c.d.row(), c.d.row() + c.d_rows}, false);
                     if (latched && !latched->c.is_sentinel()) {
                       std::pair<std::int64_t, std::int64_t> rows{latched->c.row(), latched->c.row() + latched->rows};
                       add_local(f, latched->c, rows, true);
                       if (c.mode == isa::ComputeMode::Accumulated || latched->c.accumulate()) {
                         add_local(f, latched->c, rows, false);
                       }
                     }
                   },
                   [&](const isa::Fence&) { f.barrier = true; },
               },
               ins);
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

Footprint block_footprint(const std::vector<Footprint>& fps, std::size_t first, std::size_t count) {
  Footprint b;
  std::set<std::string> written;
  for (std::size_t i = first; i < first + count; ++i) {
    const auto& f = fps[i];
    b.spad_r.merge(f.spad_r);
    b.spad_w.merge(f.spad_w);
    b.acc_r.merge(f.acc_r);
    b.acc_w.merge(f.acc_w);
    for (const auto& [k, v] : f.dram_r) b.dram_r[k].merge(v);
    for (const auto& [k, v] : f.dram_w) b.dram_w[k].merge(v);
    for (const auto& r : f.reg_r) {
      if (!written.count(r)) b.reg_r.insert(r);
    }
    for (const auto& w : f.reg_w) {
      written.insert(w);
      b.reg_w.insert(w);
    }
    b.barrier = b.barrier || f.barrier;
  }
  return b;
}

}  // namespace

void refresh_footprints(const isa::Program& p, std::vector<Block>& blocks, const sim::MachineConfig& cfg) {
  auto fps = instruction_footprints(p, cfg);
  std::size_t pos = 0;
  for (auto& b : blocks) {
    b.first = pos;
    b.footprint = block_footprint(fps, pos, b.instructions.size());
    pos += b.instructions.size();
  }
}

namespace {

bool dram_conflict(const std::map<std::string, IntervalSet>& a, const std::map<std::string, IntervalSet>& b) {
  for (const auto& [name, set] : a) {
    auto it = b.find(name);
    if (it != b.end() && set.overlaps(it->second)) return true;
  }
  return false;
}

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& s) { return b.count(s) > 0; });
}

}  // namespace

std::vector<Block> segment_blocks(const isa::Program& p, const sim::MachineConfig& cfg) {
  isa::validate_program(p, cfg.dim);
  const auto& ins = p.instructions;
  std::vector<Block> blocks;
  if (ins.empty()) return blocks;
  std::size_t i = 0;
  while (i < ins.size() && isa::is_config(ins[i])) ++i;
  std::vector<std::pair<std::size_t, bool>> starts;  // (start, prelude)
  if (i > 0) starts.emplace_back(0, true);
  if (i < ins.size()) {
    starts.emplace_back(i, false);
    std::vector<std::size_t> anchors;
    for (std::size_t j = i; j < ins.size(); ++j) {
      if (is_preload(ins[j])) anchors.push_back(j);
    }
    for (std::size_t k = 1; k < anchors.size(); ++k) {
      // loads and config immediately before a preload feed it; anything
      // earlier in the gap (stores) stays with the previous block
      std::size_t split = anchors[k];
      while (split > anchors[k - 1] + 1 &&
             (std::holds_alternative<isa::Mvin>(ins[split - 1]) || isa::is_config(ins[split - 1]))) {
        --split;
      }
      if (split > starts.back().first) starts.emplace_back(split, false);
    }
  }
  for (std::size_t s = 0; s < starts.size(); ++s) {
    std::size_t end = s + 1 < starts.size() ? starts[s + 1].first : ins.size();
    Block b;
    b.id = static_cast<int>(s);
    b.prelude = starts[s].second;
    b.instructions.assign(ins.begin() + static_cast<std::ptrdiff_t>(starts[s].first),
                          ins.begin() + static_cast<std::ptrdiff_t>(end));
    blocks.push_back(std::move(b));
  }
  refresh_footprints(p, blocks, cfg);
  return blocks;
}

std::set<Edge> analyze_dependences(const std::vector<Block>& blocks) {
  std::set<Edge> edges;
  const std::size_t n = blocks.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = blocks[i].footprint;
      const auto& b = blocks[j].footprint;
      bool conflict = a.barrier || b.barrier;
      conflict = conflict || a.spad_w.overlaps(b.spad_r) || a.spad_r.overlaps(b.spad_w) || a.spad_w.overlaps(b.spad_w);
      conflict = conflict || a.acc_w.overlaps(b.acc_r) || a.acc_r.overlaps(b.acc_w) || a.acc_w.overlaps(b.acc_w);
      conflict = conflict || dram_conflict(a.dram_w, b.dram_r) || dram_conflict(a.dram_r, b.dram_w) ||
                 dram_conflict(a.dram_w, b.dram_w);
      conflict = conflict || intersects(a.reg_w, b.reg_r) || intersects(a.reg_r, b.reg_w);
      if (!conflict) {
        // two writers of a register only need ordering if a later block reads it
        for (const auto& r : a.reg_w) {
          if (!b.reg_w.count(r)) continue;
          for (std::size_t d = j + 1; d < n && !conflict; ++d) conflict = blocks[d].footprint.reg_r.count(r) > 0;
          if (conflict) break;
        }
      }
      if (conflict) edges.emplace(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return edges;
}

isa::Program reassemble(const isa::Program& original, const std::vector<Block>& blocks, const std::vector<int>& order) {
  isa::Program p;
  p.buffers = original.buffers;
  p.symbols = original.symbols;
  for (int id : order) {
    const auto& b = blocks.at(static_cast<std::size_t>(id));
    p.instructions.insert(p.instructions.end(), b.instructions.begin(), b.instructions.end());
  }
  return p;
}

bool respects(const std::vector<int>& order, std::size_t n, const std::set<Edge>& edges) {
  if (order.size() != n) return false;
  std::vector<int> pos(n, -1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    int id = order[i];
    if (id < 0 || static_cast<std::size_t>(id) >= n || pos[static_cast<std::size_t>(id)] >= 0) return false;
    pos[static_cast<std::size_t>(id)] = static_cast<int>(i);
  }
  for (const auto& [a, b] : edges) {
    if (static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) return false;
    if (pos[static_cast<std::size_t>(a)] > pos[static_cast<std::size_t>(b)]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// peephole

namespace {

// Forward state of the rewrite pass. Unknown register values are tracked by
// generation so identical instructions under the same (unknown) setting still
// match.
class PeepState {
 public:
  explicit PeepState(std::uint32_t dim) : dim_(dim) {}

  /// Returns the instruction to keep (possibly rewritten), or nullopt to drop.
  std::optional<isa::Instruction> step(const isa::Instruction& ins) {
    return std::visit(
        overloaded{
            [&](const isa::ConfigEx& c) -> std::optional<isa::Instruction> {
              if (!ex_ || !(*ex_ == c)) {
                ++ex_gen_;
                weights_intact_ = false;
              }
              ex_ = c;
              return ins;
            },
            [&](const isa::ConfigLd& c) -> std::optional<isa::Instruction> {
              if (c.channel < 3) {
                ld_[c.channel] = c.stride_bytes;
                ++ld_gen_[c.channel];
              }
              return ins;
            },
            [&](const isa::ConfigSt& c) -> std::optional<isa::Instruction> {
              st_ = c.stride_bytes;
              return ins;
            },
            [&](const isa::Mvin& m) -> std::optional<isa::Instruction> { return mvin(m); },
            [&](const isa::Mvout& m) -> std::optional<isa::Instruction> {
              auto span = dram_span(m.dram, st_, m.cols, m.rows);
              std::erase_if(avail_, [&](const Avail& a) {
                return a.m.dram.buffer == m.dram.buffer && a.dram_lo < span.second && span.first < a.dram_hi;
              });
              return ins;
            },
            [&](const isa::Preload& p) -> std::optional<isa::Instruction> { return preload(p); },
            [&](const isa::PreloadZeros& p) -> std::optional<isa::Instruction> {
              if (last_ && std::holds_alternative<isa::PreloadZeros>(*last_) &&
                  std::get<isa::PreloadZeros>(*last_) == p) {
                return std::nullopt;
              }
              last_ = p;
              src_.reset();
              c_ = LatchedC{p.c, dim_};
              return ins;
            },
            [&](const isa::Compute&) -> std::optional<isa::Instruction> {
              if (c_ && !c_->c.is_sentinel()) written(c_->c, c_->c.row(), c_->c.row() + c_->rows);
              return ins;
            },
            [&](const isa::Fence&) -> std::optional<isa::Instruction> { return ins; },
        },
        ins);
  }

 private:
  struct Avail {
    isa::Mvin m;
    std::optional<std::uint32_t> stride;
    std::uint64_t gen = 0;
    std::int64_t lo = 0, hi = 0;
    std::int64_t dram_lo = 0, dram_hi = 0;
  };
  struct Source {
    isa::LocalAddr b;
    std::uint32_t cols = 0, rows = 0;
  };

  std::optional<isa::Instruction> mvin(const isa::Mvin& m) {
    std::optional<std::uint32_t> stride = m.channel < 3 ? ld_[m.channel] : std::nullopt;
    std::uint64_t gen = m.channel < 3 ? ld_gen_[m.channel] : 0;
    auto rows = local_rows(m.local, m.cols, m.rows, dim_);
    bool accumulating = m.local.space() == isa::Space::Accumulator && m.local.accumulate();
    if (!accumulating) {
      for (const auto& a : avail_) {
        bool same_stride = (a.stride && stride && *a.stride == *stride) || a.gen == gen;
        if (a.m == m && same_stride) return std::nullopt;
      }
    }
    written(m.local, rows.first, rows.second);
    if (!accumulating) {
      auto span = dram_span(m.dram, stride, m.cols, m.rows);
      avail_.push_back({m, stride, gen, rows.first, rows.second, span.first, span.second});
    }
    return m;
  }

  std::optional<isa::Instruction> preload(isa::Preload p) {
    if (last_ && std::holds_alternative<isa::Preload>(*last_) && std::get<isa::Preload>(*last_) == p &&
        (p.b.is_sentinel() || weights_intact_)) {
      return std::nullopt;
    }
    if (!p.b.is_sentinel() && src_ && weights_intact_ && src_->b == p.b && src_->cols == p.b_cols &&
        src_->rows == p.b_rows) {
      p.b = isa::LocalAddr{isa::kSentinelAddr};
    }
    if (!p.b.is_sentinel()) {
      src_ = Source{p.b, p.b_cols, p.b_rows};
      weights_intact_ = true;
    }
    last_ = p;
    c_ = LatchedC{p.c, p.c_rows};
    return p;
  }

  void written(isa::LocalAddr where, std::int64_t lo, std::int64_t hi) {
    auto space = where.space();
    std::erase_if(avail_, [&](const Avail& a) { return a.m.local.space() == space && a.lo < hi && lo < a.hi; });
    if (src_ && src_->b.space() == space && src_->b.row() < hi && lo < src_->b.row() + src_->rows) {
      weights_intact_ = false;
    }
  }

  std::uint32_t dim_;
  std::array<std::optional<std::uint32_t>, 3> ld_{};
  std::array<std::uint64_t, 3> ld_gen_{};
  std::optional<std::uint32_t> st_;
  std::optional<isa::ConfigEx> ex_;
  std::uint64_t ex_gen_ = 0;
  std::vector<Avail> avail_;
  std::optional<isa::Instruction> last_;
  std::optional<Source> src_;
  bool weights_intact_ = false;
  std::optional<LatchedC> c_;
};

std::vector<isa::Instruction> peephole_pass(const std::vector<isa::Instruction>& in, std::uint32_t dim) {
  PeepState s(dim);
  std::vector<isa::Instruction> out;
  for (const auto& i : in) {
    if (auto kept = s.step(i)) out.push_back(std::move(*kept));
  }
  return out;
}

}  // namespace

std::vector<isa::Instruction> peephole(const std::vector<isa::Instruction>& in, const sim::MachineConfig& cfg) {
  auto cur = peephole_pass(in, cfg.dim);
  while (true) {
    auto next = peephole_pass(cur, cfg.dim);
    if (next == cur) return cur;
    cur = std::move(next);
  }
}

Block peephole_block(const Block& b, const sim::MachineConfig& cfg) {
  Block out = b;
  out.instructions = peephole(b.instructions, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// ordering search

namespace {

class OrderSearch {
 public:
  OrderSearch(const std::vector<Block>& blocks, const std::set<Edge>& edges, const cost::CostParams& params,
              const sim::MachineConfig& cfg)
      : blocks_(blocks), params_(params), cfg_(cfg), preds_(blocks.size()) {
    for (const auto& [a, b] : edges) preds_[static_cast<std::size_t>(b)].push_back(a);
  }

  double append_cost(PeepState& s, const Block& b) const {
    double c = 0;
    for (const auto& ins : b.instructions) {
      if (auto kept = s.step(ins)) c += cost::instruction_cost(*kept, params_, cfg_);
    }
    return c;
  }

  bool ready(int id, const std::vector<char>& placed) const {
    if (placed[static_cast<std::size_t>(id)]) return false;
    for (int p : preds_[static_cast<std::size_t>(id)]) {
      if (!placed[static_cast<std::size_t>(p)]) return false;
    }
    return true;
  }

  std::vector<int> exhaustive() {
    std::vector<int> cur;
    std::vector<char> placed(blocks_.size(), 0);
    dfs(PeepState(cfg_.dim), 0.0, cur, placed);
    return best_;
  }

  std::vector<int> greedy() const {
    std::vector<int> order;
    std::vector<char> placed(blocks_.size(), 0);
    PeepState s(cfg_.dim);
    while (order.size() < blocks_.size()) {
      int pick = -1;
      double pick_cost = 0;
      std::optional<PeepState> pick_state;
      for (std::size_t id = 0; id < blocks_.size(); ++id) {
        if (!ready(static_cast<int>(id), placed)) continue;
        PeepState trial = s;
        double c = append_cost(trial, blocks_[id]);
        if (pick < 0 || c < pick_cost) {
          pick = static_cast<int>(id);
          pick_cost = c;
          pick_state = std::move(trial);
        }
      }
      order.push_back(pick);
      placed[static_cast<std::size_t>(pick)] = 1;
      s = std::move(*pick_state);
    }
    return order;
  }

 private:
  void dfs(const PeepState& s, double cost, std::vector<int>& cur, std::vector<char>& placed) {
    if (!best_.empty() && cost >= best_cost_) return;
    if (cur.size() == blocks_.size()) {
      best_ = cur;
      best_cost_ = cost;
      return;
    }
    for (std::size_t id = 0; id < blocks_.size(); ++id) {
      if (!ready(static_cast<int>(id), placed)) continue;
      PeepState next = s;
      double c = append_cost(next, blocks_[id]);
      cur.push_back(static_cast<int>(id));
      placed[id] = 1;
      dfs(next, cost + c, cur, placed);
      placed[id] = 0;
      cur.pop_back();
    }
  }

  const std::vector<Block>& blocks_;
  const cost::CostParams& params_;
  const sim::MachineConfig& cfg_;
  std::vector<std::vector<int>> preds_;
  std::vector<int> best_;
  double best_cost_ = 0;
};

}  // namespace

OrderingPlan search_reorder(const isa::Program&, const std::vector<Block>& blocks, const std::set<Edge>& edges,
                            const cost::CostParams& params, const sim::MachineConfig& cfg) {
  const std::size_t n = blocks.size();
  // Kahn's algorithm to reject cycles
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> succ(n);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
      throw OptimizerError(fmt::format("edge {}->{} names a missing block", a, b));
    }
    succ[static_cast<std::size_t>(a)].push_back(b);
    ++indeg[static_cast<std::size_t>(b)];
  }
  std::vector<int> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) queue.push_back(static_cast<int>(i));
  }
  std::size_t seen = 0;
  while (!queue.empty()) {
    int x = queue.back();
    queue.pop_back();
    ++seen;
    for (int y : succ[static_cast<std::size_t>(x)]) {
      if (--indeg[static_cast<std::size_t>(y)] == 0) queue.push_back(y);
    }
  }
  if (seen != n) throw OptimizerError("dependence edges form a cycle");
  OrderingPlan plan;
  plan.source = PlanSource::Search;
  if (n == 0) return plan;
  OrderSearch s(blocks, edges, params, cfg);
  plan.order = n <= 8 ? s.exhaustive() : s.greedy();
  return plan;
}

std::optional<std::vector<int>> parse_plan(std::string_view reply, std::size_t n) {
  std::string text(reply);
  std::vector<int> order;
  static const std::regex labelled(R"(Block\s+(\d+))", std::regex::icase);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), labelled); it != std::sregex_iterator(); ++it) {
    order.push_back(std::stoi((*it)[1]));
  }
  auto valid = [&](const std::vector<int>& o) { return respects(o, n, {}); };
  if (valid(order)) return order;
  // the labels may list the input before the plan; take the last n
  if (order.size() > n) {
    std::vector<int> tail(order.end() - static_cast<std::ptrdiff_t>(n), order.end());
    if (valid(tail)) return tail;
  }
  static const std::regex list(R"(\[\s*(\d+(?:\s*,\s*\d+)*)\s*\])");
  std::smatch m;
  if (std::regex_search(text, m, list)) {
    std::vector<int> nums;
    std::string inner = m[1];
    static const std::regex num(R"(\d+)");
    for (auto it = std::sregex_iterator(inner.begin(), inner.end(), num); it != std::sregex_iterator(); ++it) {
      nums.push_back(std::stoi(it->str()));
    }
    if (valid(nums)) return nums;
  }
  return std::nullopt;
}

Mode parse_mode(std::string_view s) {
  if (s == "rules") return Mode::Rules;
  if (s == "llm") return Mode::Llm;
  if (s == "llm_then_rules") return Mode::LlmThenRules;
  throw std::invalid_argument(fmt::format("unknown optimize mode '{}'", s));
}

std::string render_block(const Block& b) {
  std::string out;
  for (const auto& i : b.instructions) out += isa::render_instruction(i) + "\n";
  return out;
}

namespace {

bool passes(const isa::Program& p, const kernels::KernelSpec& spec, const std::vector<kernels::TestCase>& cases,
            const sim::MachineConfig& machine) {
  kernels::VerifyOptions v;
  v.machine = machine;
  v.short_circuit = true;
  try {
    return kernels::verify_program(p, spec, cases, v).passed;
  } catch (const std::exception&) {
    return false;
  }
}

double cost_of(const isa::Program& p, const OptimizeOptions& o) {
  return cost::program_cost(p, o.cost, o.machine).total;
}

std::optional<std::vector<isa::Instruction>> llm_block(const Block& b, const isa::Program& p, llm::Backend& backend,
                                                       const OptimizeOptions& o) {
  const auto& assets = prompts::default_assets();
  isa::Program alone{p.buffers, {}, b.instructions};
  auto feedback = cost::render_feedback(cost::program_cost(alone, o.cost, o.machine));
  const auto& heuristics = o.use_default_heuristics && o.heuristics.empty() ? assets.default_heuristics : o.heuristics;
  auto prompt = prompts::build_block_optimize_prompt(render_block(b), assets.isa, heuristics, feedback, assets);
  auto params = o.params;
  params.n_samples = 1;
  auto reply = backend.complete(prompt, params).at(0).text;
  auto code = eval::extract_code(reply);
  if (!code) return std::nullopt;
  isa::ParseOptions popts;
  popts.dim = o.machine.dim;
  try {
    auto parsed = isa::parse_program(*code, p.buffers, popts);
    if (parsed.instructions.empty()) return std::nullopt;
    return parsed.instructions;
  } catch (const isa::IsaError&) {
    return std::nullopt;
  }
}

}  // namespace

OptimizeResult optimize_program(const isa::Program& p, const kernels::KernelSpec& spec,
                                const std::vector<kernels::TestCase>& cases, Mode mode, llm::Backend* backend,
                                const OptimizeOptions& opts) {
  OptimizeResult r;
  r.program = p;
  r.before = cost::program_cost(p, opts.cost, opts.machine);
  r.after = r.before;
  if (!passes(p, spec, cases, opts.machine)) {
    r.log.push_back({"input", false, "input program fails verification; left unchanged"});
    return r;
  }
  if ((mode == Mode::Llm || mode == Mode::LlmThenRules) && !backend) {
    throw OptimizerError("llm optimize mode needs a backend");
  }
  auto blocks = segment_blocks(p, opts.machine);
  std::vector<int> identity(blocks.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);

  // stage 1: per-block rewrites
  if (mode == Mode::Llm || mode == Mode::LlmThenRules) {
    for (auto& b : blocks) {
      auto proposal = llm_block(b, p, *backend, opts);
      if (!proposal) {
        r.log.push_back({fmt::format("block {} (llm)", b.id), false, "reply did not parse"});
        continue;
      }
      auto saved = b.instructions;
      b.instructions = *proposal;
      auto trial = reassemble(p, blocks, identity);
      bool ok = passes(trial, spec, cases, opts.machine) && cost_of(trial, opts) <= cost_of(reassemble(p, blocks, identity), opts);
      if (ok) {
        // compare against the program with the original block
        std::swap(b.instructions, saved);
        double old_cost = cost_of(reassemble(p, blocks, identity), opts);
        std::swap(b.instructions, saved);
        ok = cost_of(trial, opts) <= old_cost;
      }
      if (!ok) b.instructions = saved;
      r.log.push_back({fmt::format("block {} (llm)", b.id), ok, ok ? "rewrite accepted" : "rewrite failed the gate"});
    }
  }
  if (mode == Mode::Rules || mode == Mode::LlmThenRules) {
    auto saved = blocks;
    for (auto& b : blocks) b = peephole_block(b, opts.machine);
    auto trial = reassemble(p, blocks, identity);
    bool ok = passes(trial, spec, cases, opts.machine);
    if (!ok) blocks = saved;
    r.log.push_back({"block rules", ok, ok ? "peephole applied" : "peephole result failed verification"});
  }
  auto staged = reassemble(p, blocks, identity);
  refresh_footprints(staged, blocks, opts.machine);

  // stage 2: ordering and cross-block cleanup
  auto edges = analyze_dependences(blocks);
  OrderingPlan plan;
  bool have_plan = false;
  if (mode == Mode::Llm || mode == Mode::LlmThenRules) {
    std::vector<std::string> texts;
    for (const auto& b : blocks) texts.push_back(render_block(b));
    auto prompt = prompts::build_reorder_prompt(texts, prompts::default_assets().isa);
    auto params = opts.params;
    params.n_samples = 1;
    auto reply = backend->complete(prompt, params).at(0).text;
    auto order = parse_plan(reply, blocks.size());
    if (order && respects(*order, blocks.size(), edges)) {
      plan = {*order, PlanSource::Llm};
      have_plan = true;
      r.log.push_back({"plan (llm)", true, "plan respects dependences"});
    } else {
      r.log.push_back({"plan (llm)", false, order ? "plan violates a dependence; using search" : "no plan found; using search"});
    }
  }
  if (!have_plan) plan = search_reorder(staged, blocks, edges, opts.cost, opts.machine);

  auto ordered = reassemble(p, blocks, plan.order);
  ordered.instructions = peephole(ordered.instructions, opts.machine);
  if (!passes(ordered, spec, cases, opts.machine)) {
    r.log.push_back({"ordering", false, "reordered program failed verification; keeping block order"});
    plan = {identity, PlanSource::Identity};
    ordered = staged;
    ordered.instructions = peephole(ordered.instructions, opts.machine);
    if (!passes(ordered, spec, cases, opts.machine)) ordered = staged;
  } else {
    r.log.push_back({"ordering", true, fmt::format("{} blocks, {} edges", blocks.size(), edges.size())});
  }
  r.plan = plan;

  auto after = cost::program_cost(ordered, opts.cost, opts.machine);
  if (after.total < r.before.total) {
    r.program = std::move(ordered);
    r.after = after;
    r.changed = true;
  } else {
    r.plan = {identity, PlanSource::Identity};
    r.log.push_back({"result", false, "no cost reduction; input kept"});
  }
  return r;
}

}  // namespace talift::opt
