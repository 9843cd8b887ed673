#include "talift/repair.hpp"

#include <fmt/format.h>

#include <chrono>
#include <limits>
#include <regex>
#include <set>
#include <thread>

#include "talift/eval.hpp"
#include "talift/util.hpp"

namespace talift::repair {

namespace {

struct Span {
  std::size_t begin, end;
  Hole hole;
};

std::pair<std::size_t, std::size_t> line_col(const std::string& s, std::size_t pos) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < pos; ++i) {
    if (s[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const std::regex& decl_re() {
  static const std::regex re(
      R"((?:static\s+)?(?:const\s+)?(?:uint32_t|uint64_t|int32_t|int64_t|size_t|unsigned\s+int|unsigned|int|long)\s+([A-Za-z_]\w*)\s*=\s*(-?(?:0[xX][0-9a-fA-F]+|\d+))[uUlL]*\s*;)");
  return re;
}

std::set<std::string> declared_names(const std::string& code) {
  std::set<std::string> out;
  for (auto it = std::sregex_iterator(code.begin(), code.end(), decl_re()); it != std::sregex_iterator(); ++it) {
    out.insert((*it)[1]);
  }
  return out;
}

bool used_after(const std::string& code, const std::string& name, std::size_t pos) {
  std::regex use("\\b" + name + "\\b");
  return std::regex_search(code.begin() + static_cast<std::ptrdiff_t>(pos), code.end(), use);
}

}  // namespace

std::string HoleTemplate::fill(const std::vector<std::int64_t>& values) const {
  if (values.size() != holes.size()) {
    throw std::invalid_argument(fmt::format("{} values for {} holes", values.size(), holes.size()));
  }
  std::string out = pieces.front();
  for (std::size_t i = 0; i < holes.size(); ++i) {
    out += std::to_string(values[i]);
    out += pieces[i + 1];
  }
  return out;
}

HoleTemplate extract_holes(const std::string& marked, const std::optional<std::string>& original) {
  std::vector<Span> spans;
  for (std::size_t pos = marked.find(kConstToken); pos != std::string::npos;
       pos = marked.find(kConstToken, pos + kConstToken.size())) {
    auto [l, c] = line_col(marked, pos);
    spans.push_back({pos, pos + kConstToken.size(), Hole{"", l, c, false}});
  }
  if (original) {
    auto before = declared_names(*original);
    for (auto it = std::sregex_iterator(marked.begin(), marked.end(), decl_re()); it != std::sregex_iterator(); ++it) {
      std::string name = (*it)[1];
      if (before.count(name)) continue;
      auto end_of_decl = static_cast<std::size_t>(it->position(0) + it->length(0));
      if (!used_after(marked, name, end_of_decl)) continue;
      auto vpos = static_cast<std::size_t>(it->position(2));
      auto [l, c] = line_col(marked, vpos);
      spans.push_back({vpos, vpos + static_cast<std::size_t>(it->length(2)), Hole{name, l, c, true}});
    }
  }
  if (spans.empty()) throw RepairError(RepairError::Code::NoHolesFound, "no holes marked in the candidate");
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  HoleTemplate t;
  std::size_t cursor = 0, unnamed = 0;
  for (auto& s : spans) {
    t.pieces.push_back(marked.substr(cursor, s.begin - cursor));
    if (!s.hole.named) s.hole.id = fmt::format("h{}", unnamed++);
    t.holes.push_back(s.hole);
    cursor = s.end;
  }
  t.pieces.push_back(marked.substr(cursor));
  return t;
}

FillEnumerator::FillEnumerator(const HoleTemplate& t, std::vector<std::int64_t> constants, std::size_t cap,
                               isa::BufferTable buffers)
    : t_(t), constants_(std::move(constants)), cap_(cap), buffers_(std::move(buffers)), digits_(t.holes.size(), 0) {
  if (constants_.empty()) throw RepairError(RepairError::Code::EmptyConstantSet, "constant set is empty");
  total_ = 1;
  for (std::size_t i = 0; i < t.holes.size(); ++i) {
    if (total_ > std::numeric_limits<std::size_t>::max() / constants_.size()) {
      total_ = std::numeric_limits<std::size_t>::max();
      break;
    }
    total_ *= constants_.size();
  }
}

std::optional<Fill> FillEnumerator::next() {
  while (!done_) {
    if (tried_ >= cap_) {
      cap_hit_ = tried_ < total_;
      done_ = true;
      break;
    }
    Fill f;
    f.index = tried_;
    for (auto d : digits_) f.values.push_back(constants_[d]);
    ++tried_;
    // advance: last hole varies fastest
    std::size_t pos = digits_.size();
    while (pos > 0) {
      --pos;
      if (++digits_[pos] < constants_.size()) break;
      digits_[pos] = 0;
      if (pos == 0) done_ = true;
    }
    if (digits_.empty()) done_ = true;
    f.text = t_.fill(f.values);
    try {
      f.program = isa::parse_program(f.text, buffers_);
      return f;
    } catch (const isa::IsaError&) {
      ++unparseable_;
    }
  }
  return std::nullopt;
}

Mode parse_mode(std::string_view s) {
  if (s == "llm") return Mode::Llm;
  if (s == "enumerate") return Mode::Enumerate;
  if (s == "llm_then_enumerate") return Mode::LlmThenEnumerate;
  throw std::invalid_argument(fmt::format("unknown repair mode '{}'", s));
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Repaired: return "Repaired";
    case Outcome::Exhausted: return "Exhausted";
    case Outcome::Aborted: return "Aborted";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

std::map<std::string, std::int64_t> assignment_of(const HoleTemplate& t, const std::vector<std::int64_t>& values) {
  std::map<std::string, std::int64_t> out;
  for (std::size_t i = 0; i < t.holes.size(); ++i) out[t.holes[i].id] = values[i];
  return out;
}

// Verifies a batch in parallel and returns the lowest passing position.
std::optional<std::size_t> first_passing(const std::vector<Fill>& batch, const kernels::KernelSpec& spec,
                                         const std::vector<kernels::TestCase>& cases, int jobs) {
  kernels::VerifyOptions vopts;
  vopts.short_circuit = true;
  std::vector<char> ok(batch.size(), 0);
  auto work = [&](std::size_t start, std::size_t stride) {
    for (std::size_t i = start; i < batch.size(); i += stride) {
      ok[i] = kernels::verify_program(batch[i].program, spec, cases, vopts).passed ? 1 : 0;
    }
  };
  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), batch.size());
  if (n <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (ok[i]) return i;
  }
  return std::nullopt;
}

}  // namespace

RepairResult repair_template(const HoleTemplate& t, const kernels::KernelSpec& spec,
                             const std::vector<kernels::TestCase>& cases, const std::vector<std::int64_t>& constants,
                             const RepairOptions& opts) {
  RepairResult r;
  if (t.holes.size() > opts.max_holes) {
    r.outcome = Outcome::Aborted;
    r.reason = fmt::format("{} holes exceed the enumeration limit of {}", t.holes.size(), opts.max_holes);
    return r;
  }
  auto start = Clock::now();
  FillEnumerator en(t, constants, opts.cap, spec.buffer_table());
  const std::size_t batch_size = opts.jobs > 1 ? 64 : 1;
  while (true) {
    std::vector<Fill> batch;
    while (batch.size() < batch_size) {
      auto f = en.next();
      if (!f) break;
      batch.push_back(std::move(*f));
    }
    if (batch.empty()) break;
    if (auto hit = first_passing(batch, spec, cases, opts.jobs)) {
      const auto& f = batch[*hit];
      r.outcome = Outcome::Repaired;
      r.program = f.text;
      r.assignment = assignment_of(t, f.values);
      r.stats.candidates_tried = f.index + 1;
      r.stats.unparseable = en.unparseable();
      r.stats.verify_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      return r;
    }
  }
  r.outcome = Outcome::Exhausted;
  r.stats.candidates_tried = en.tried();
  r.stats.unparseable = en.unparseable();
  r.stats.cap_hit = en.cap_hit();
  r.stats.verify_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  r.reason = en.cap_hit() ? fmt::format("cap of {} candidates reached", opts.cap)
                          : fmt::format("no assignment from {} candidates passed", en.tried());
  return r;
}

RepairResult repair(const std::string& candidate, const kernels::KernelSpec& spec,
                    const std::vector<kernels::TestCase>& cases, const std::vector<std::int64_t>& constants, Mode mode,
                    llm::Backend* backend, const RepairOptions& opts) {
  if (constants.empty()) throw RepairError(RepairError::Code::EmptyConstantSet, "constant set is empty");
  RepairResult r;
  kernels::VerifyOptions vopts;
  vopts.short_circuit = true;
  if (kernels::verify_text(candidate, spec, cases, vopts).passed) {
    r.outcome = Outcome::Repaired;
    r.program = candidate;
    return r;
  }
  if (!backend) {
    r.reason = "no backend to mark holes";
    return r;
  }
  auto start = Clock::now();
  llm::GenerationParams mark_params = opts.params;
  mark_params.n_samples = 1;
  auto [p1, unused] = prompts::build_repair_prompts(candidate, constants, std::nullopt, opts.context);
  auto marked_reply = backend->complete(p1, mark_params).at(0).text;
  auto marked = eval::extract_code(marked_reply).value_or(marked_reply);

  HoleTemplate t;
  try {
    t = extract_holes(marked, candidate);
  } catch (const RepairError& e) {
    r.reason = e.what();
    return r;
  }
  t.origin = sha256_hex(candidate).substr(0, 12);

  if (mode == Mode::Llm || mode == Mode::LlmThenEnumerate) {
    auto [q1, p2] = prompts::build_repair_prompts(candidate, constants, marked, opts.context);
    llm::GenerationParams fill_params = opts.params;
    fill_params.n_samples = std::max(1, opts.llm_fill_samples);
    auto replies = backend->complete(p2, fill_params);
    for (const auto& reply : replies) {
      ++r.stats.candidates_tried;
      auto code = eval::extract_code(reply.text);
      if (!code) {
        ++r.stats.unparseable;
        continue;
      }
      auto v = kernels::verify_text(*code, spec, cases, vopts);
      if (v.failure == kernels::FailureKind::ParseError) ++r.stats.unparseable;
      if (v.passed) {
        r.outcome = Outcome::Repaired;
        r.program = *code;
        r.stats.verify_seconds = std::chrono::duration<double>(Clock::now() - start).count();
        return r;
      }
    }
    if (mode == Mode::Llm) {
      r.outcome = Outcome::Exhausted;
      r.reason = "no model fill passed";
      r.stats.verify_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      return r;
    }
  }
  auto prior = r.stats;
  r = repair_template(t, spec, cases, constants, opts);
  r.stats.candidates_tried += prior.candidates_tried;
  r.stats.unparseable += prior.unparseable;
  r.stats.verify_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

}  // namespace talift::repair
