#include "talift/loop_sched.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <future>
#include <random>
#include <regex>
#include <set>

#include "talift/util.hpp"

namespace talift::sched {

using Path = std::vector<std::size_t>;

std::string_view command_name(CommandKind k) {
  switch (k) {
    case CommandKind::Tile: return "tile";
    case CommandKind::Fuse: return "fuse";
    case CommandKind::Reorder: return "reorder";
    case CommandKind::Fission: return "fission";
    case CommandKind::Unroll: return "unroll";
  }
  return "?";
}

nlohmann::json ScheduleCommand::to_json() const {
  nlohmann::json args = nlohmann::json::object();
  switch (kind) {
    case CommandKind::Tile:
      args = {{"line", line}, {"tile_size", std::to_string(tile_size)}, {"outer_name", outer_name},
              {"inner_name", inner_name}};
      break;
    case CommandKind::Fuse: args = {{"line1", line}, {"line2", line2}}; break;
    case CommandKind::Reorder:
    case CommandKind::Unroll: args = {{"line", line}}; break;
    case CommandKind::Fission: args = {{"line", line}, {"location", after ? "after" : "before"}}; break;
  }
  return {{"optimization", std::string(command_name(kind))}, {"arguments", args}};
}

namespace {

[[noreturn]] void bad(const std::string& msg) { throw ScheduleError(SchedErrc::BadCommand, msg); }

std::string string_arg(const nlohmann::json& args, const char* key) {
  const auto& v = args.at(key);
  if (!v.is_string()) bad(fmt::format("argument '{}' must be a string", key));
  return v.get<std::string>();
}

}  // namespace

ScheduleCommand parse_command(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("optimization") || !j["optimization"].is_string()) {
    bad("command needs an \"optimization\" name");
  }
  if (!j.contains("arguments") || !j["arguments"].is_object()) bad("command needs an \"arguments\" object");
  const auto name = j["optimization"].get<std::string>();
  const auto& args = j["arguments"];
  ScheduleCommand c;
  std::vector<const char*> keys;
  if (name == "tile") {
    c.kind = CommandKind::Tile;
    keys = {"line", "tile_size", "outer_name", "inner_name"};
  } else if (name == "fuse") {
    c.kind = CommandKind::Fuse;
    keys = {"line1", "line2"};
  } else if (name == "reorder") {
    c.kind = CommandKind::Reorder;
    keys = {"line"};
  } else if (name == "fission") {
    c.kind = CommandKind::Fission;
    keys = {"line", "location"};
  } else if (name == "unroll") {
    c.kind = CommandKind::Unroll;
    keys = {"line"};
  } else {
    bad(fmt::format("unknown optimization '{}'", name));
  }
  for (const auto* k : keys) {
    if (!args.contains(k)) bad(fmt::format("{} needs argument '{}'", name, k));
  }
  for (const auto& [k, v] : args.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      bad(fmt::format("{} does not take argument '{}'", name, k));
    }
  }
  switch (c.kind) {
    case CommandKind::Tile: {
      c.line = string_arg(args, "line");
      const auto& ts = args["tile_size"];
      if (ts.is_number_integer()) {
        c.tile_size = ts.get<std::int64_t>();
      } else if (ts.is_string() && std::regex_match(ts.get<std::string>(), std::regex(R"(\s*\d+\s*)"))) {
        c.tile_size = std::stoll(ts.get<std::string>());
      } else {
        bad("tile_size must be a positive integer");
      }
      if (c.tile_size <= 0) bad("tile_size must be a positive integer");
      c.outer_name = string_arg(args, "outer_name");
      c.inner_name = string_arg(args, "inner_name");
      break;
    }
    case CommandKind::Fuse:
      c.line = string_arg(args, "line1");
      c.line2 = string_arg(args, "line2");
      break;
    case CommandKind::Reorder:
    case CommandKind::Unroll: c.line = string_arg(args, "line"); break;
    case CommandKind::Fission: {
      c.line = string_arg(args, "line");
      auto loc = string_arg(args, "location");
      if (loc != "before" && loc != "after") bad("location must be \"before\" or \"after\"");
      c.after = loc == "after";
      break;
    }
  }
  return c;
}

std::optional<ScheduleCommand> extract_apply(std::string_view reply) {
  auto at = reply.rfind("APPLY:");
  if (at == std::string_view::npos) return std::nullopt;
  auto open = reply.find('{', at);
  if (open == std::string_view::npos) bad("APPLY: is not followed by a JSON object");
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < reply.size(); ++i) {
    char c = reply[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) {
      try {
        return parse_command(nlohmann::json::parse(reply.substr(open, i - open + 1)));
      } catch (const nlohmann::json::exception& e) {
        bad(fmt::format("APPLY: JSON does not parse: {}", e.what()));
      }
    }
  }
  bad("APPLY: JSON object is not closed");
}

// ---------------------------------------------------------------------------
// tree helpers

namespace {

std::string normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  while (!out.empty() && out.back() == ':') out.pop_back();
  return out;
}

void collect_lines(const std::vector<Stmt>& body, Path& path, std::vector<std::pair<Path, std::string>>& out) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    path.push_back(i);
    out.emplace_back(path, normalize(render_line(body[i])));
    if (const auto* l = std::get_if<Loop>(&body[i].node)) collect_lines(l->body, path, out);
    path.pop_back();
  }
}

std::vector<Stmt>& container(LoopNest& k, const Path& p) {
  std::vector<Stmt>* body = &k.body;
  for (std::size_t d = 0; d + 1 < p.size(); ++d) body = &std::get<Loop>((*body)[p[d]].node).body;
  return *body;
}

Stmt& node_at(LoopNest& k, const Path& p) { return container(k, p)[p.back()]; }

Path resolve(const LoopNest& k, const std::string& line) {
  static const std::regex suffix(R"(^(.*?)\s*#\s*(\d+)\s*$)");
  std::smatch m;
  bool numbered = std::regex_match(line, m, suffix);
  auto matches = find_lines(k, line);
  if (numbered) {
    if (matches.empty()) {
      throw ScheduleError(SchedErrc::LineNotFound,
                          fmt::format("could not find occurrence #{} of line `{}`", m[2].str(), trim(m[1].str())));
    }
    return matches.front();
  }
  if (matches.empty()) throw ScheduleError(SchedErrc::LineNotFound, fmt::format("could not find line `{}`", trim(line)));
  if (matches.size() > 1) {
    throw ScheduleError(SchedErrc::AmbiguousLine,
                        fmt::format("line `{}` appears {} times; add ` #N` to pick one", trim(line), matches.size()));
  }
  return matches.front();
}

Loop& loop_at(LoopNest& k, const Path& p, const std::string& line) {
  auto* l = std::get_if<Loop>(&node_at(k, p).node);
  if (!l) throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("`{}` is not a loop", trim(line)));
  return *l;
}

// v -> repl inside an affine map; replacement terms take v's position
Affine subst(const Affine& a, const std::string& v, const Affine& repl) {
  auto c = a.coeff(v);
  if (c == 0) return a;
  Affine out;
  out.constant = a.constant + c * repl.constant;
  auto add = [&](const std::string& n, std::int64_t x) {
    auto it = std::find_if(out.terms.begin(), out.terms.end(), [&](const auto& t) { return t.first == n; });
    if (it == out.terms.end()) {
      out.terms.emplace_back(n, x);
    } else {
      it->second += x;
    }
  };
  for (const auto& [n, x] : a.terms) {
    if (n == v) {
      for (const auto& [rn, rx] : repl.terms) add(rn, c * rx);
    } else {
      add(n, x);
    }
  }
  std::erase_if(out.terms, [](const auto& t) { return t.second == 0; });
  return out;
}

ExprPtr affine_expr(const Affine& a) {
  auto num = [](double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Number;
    e->number = v;
    return e;
  };
  auto bin = [](Expr::Kind k, ExprPtr l, ExprPtr r) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
  };
  ExprPtr out;
  if (a.constant != 0 || a.terms.empty()) out = num(static_cast<double>(a.constant));
  for (const auto& [n, c] : a.terms) {
    auto var = std::make_shared<Expr>();
    var->kind = Expr::Kind::Var;
    var->name = n;
    ExprPtr term = c == 1 ? ExprPtr(var) : bin(Expr::Kind::Mul, num(static_cast<double>(c)), var);
    out = out ? bin(Expr::Kind::Add, out, term) : term;
  }
  return out;
}

ExprPtr subst(const ExprPtr& e, const std::string& v, const Affine& repl) {
  if (e->kind == Expr::Kind::Var) return e->name == v ? affine_expr(repl) : e;
  auto out = std::make_shared<Expr>(*e);
  for (auto& i : out->index) i = subst(i, v, repl);
  if (e->lhs) out->lhs = subst(e->lhs, v, repl);
  if (e->rhs) out->rhs = subst(e->rhs, v, repl);
  return out;
}

void subst(std::vector<Stmt>& body, const std::string& v, const Affine& repl) {
  for (auto& s : body) {
    if (auto* l = std::get_if<Loop>(&s.node)) {
      if (l->var == v) continue;  // shadowed
      subst(l->body, v, repl);
    } else {
      auto& a = std::get<Assign>(s.node);
      for (auto& i : a.index) i = subst(i, v, repl);
      a.rhs = subst(a.rhs, v, repl);
    }
  }
}

void bound_vars(const std::vector<Stmt>& body, std::set<std::string>& out) {
  for (const auto& s : body) {
    if (const auto* l = std::get_if<Loop>(&s.node)) {
      out.insert(l->var);
      bound_vars(l->body, out);
    }
  }
}

struct Access {
  std::string array;
  std::vector<Affine> map;
  bool write = false;
};

void expr_accesses(const ExprPtr& e, std::vector<Access>& out) {
  if (e->kind == Expr::Kind::Read) out.push_back({e->name, e->index, false});
  if (e->lhs) expr_accesses(e->lhs, out);
  if (e->rhs) expr_accesses(e->rhs, out);
}

void accesses(const std::vector<Stmt>& body, std::vector<Access>& out) {
  for (const auto& s : body) {
    if (const auto* l = std::get_if<Loop>(&s.node)) {
      accesses(l->body, out);
    } else {
      const auto& a = std::get<Assign>(s.node);
      expr_accesses(a.rhs, out);
      if (a.accumulate) out.push_back({a.array, a.index, false});
      out.push_back({a.array, a.index, true});
    }
  }
}

std::set<std::string> written(const std::vector<Access>& acc) {
  std::set<std::string> out;
  for (const auto& a : acc) {
    if (a.write) out.insert(a.array);
  }
  return out;
}

std::set<std::string> touched(const std::vector<Access>& acc) {
  std::set<std::string> out;
  for (const auto& a : acc) out.insert(a.array);
  return out;
}

// Some dimension fixes `v`: it uses v and no other loop variable bound inside
// the region, so equal elements imply equal v.
bool pins(const std::vector<Affine>& map, const std::string& v, const std::set<std::string>& local) {
  for (const auto& d : map) {
    if (d.coeff(v) == 0) continue;
    bool alone = std::all_of(d.terms.begin(), d.terms.end(),
                             [&](const auto& t) { return t.first == v || !local.count(t.first); });
    if (alone) return true;
  }
  return false;
}

// Every access to `array` uses one index map, and that map pins every var in
// `vars`. Returns an explanation when it does not.
std::optional<std::string> uniform_and_pinned(const std::string& array, const std::vector<Access>& acc,
                                              const std::vector<std::string>& vars,
                                              const std::set<std::string>& local) {
  const std::vector<Affine>* map = nullptr;
  for (const auto& a : acc) {
    if (a.array != array) continue;
    if (!map) {
      map = &a.map;
    } else if (*map != a.map) {
      return fmt::format("{} is accessed with different index maps", array);
    }
  }
  if (!map) return std::nullopt;
  for (const auto& v : vars) {
    if (!pins(*map, v, local)) return fmt::format("accesses to {} are not private to each iteration of {}", array, v);
  }
  return std::nullopt;
}

bool is_identifier(const std::string& s) {
  static const std::regex id(R"([A-Za-z_]\w*)");
  return std::regex_match(s, id);
}

std::string render_context(const LoopNest& k, const Path& p) {
  auto full = render_kernel(k);
  std::string out;
  // header lines end at the first "):" line
  std::size_t end = full.find("):\n");
  out = full.substr(0, end + 3);
  const std::vector<Stmt>* body = &k.body;
  for (std::size_t d = 0; d < p.size(); ++d) {
    std::string pad(4 * (d + 1), ' ');
    if (p[d] > 0) out += pad + "...\n";
    const auto& s = (*body)[p[d]];
    out += pad + render_line(s);
    if (d + 1 == p.size()) {
      out += "  # <-- NODE";
    } else {
      body = &std::get<Loop>(s.node).body;
    }
    out += "\n";
  }
  return out;
}

constexpr std::size_t kMaxUnrolledStatements = 1u << 16;

std::size_t count_statements(const std::vector<Stmt>& body) {
  std::size_t n = 0;
  for (const auto& s : body) {
    ++n;
    if (const auto* l = std::get_if<Loop>(&s.node)) n += count_statements(l->body);
  }
  return n;
}

LoopNest tile(const LoopNest& in, const ScheduleCommand& c) {
  LoopNest k = in;
  auto path = resolve(k, c.line);
  auto& l = loop_at(k, path, c.line);
  auto extent = l.hi - l.lo;
  if (extent % c.tile_size != 0) {
    throw ScheduleError(SchedErrc::NonDivisibleTile,
                        fmt::format("loop extent {} is not divisible by tile size {}", extent, c.tile_size));
  }
  if (!is_identifier(c.outer_name) || !is_identifier(c.inner_name) || c.outer_name == c.inner_name) {
    throw ScheduleError(SchedErrc::IllegalRewrite, "outer_name and inner_name must be two distinct identifiers");
  }
  std::set<std::string> taken;
  bound_vars(k.body, taken);
  for (const auto& a : k.arrays) taken.insert(a.name);
  taken.erase(l.var);
  for (const auto* n : {&c.outer_name, &c.inner_name}) {
    if (taken.count(*n)) throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("name '{}' is already in use", *n));
  }
  auto body = l.body;
  subst(body, l.var, Affine{l.lo, {{c.inner_name, 1}, {c.outer_name, c.tile_size}}});
  Loop inner{c.inner_name, 0, c.tile_size, std::move(body)};
  Loop outer{c.outer_name, 0, extent / c.tile_size, {}};
  outer.body.push_back({std::move(inner)});
  node_at(k, path).node = std::move(outer);
  return k;
}

LoopNest reorder(const LoopNest& in, const ScheduleCommand& c) {
  LoopNest k = in;
  auto path = resolve(k, c.line);
  auto& outer = loop_at(k, path, c.line);
  if (outer.body.size() != 1 || !std::holds_alternative<Loop>(outer.body[0].node)) {
    auto node = path;
    node.push_back(0);
    throw ScheduleError(SchedErrc::IllegalRewrite,
                        "argument 1, 'nested_loops' to reorder_loops: expected the body of the outer loop to be a "
                        "single loop, but it was a " +
                            render_context(k, node));
  }
  auto inner = std::get<Loop>(outer.body[0].node);
  std::set<std::string> local{outer.var, inner.var};
  bound_vars(inner.body, local);
  std::vector<Access> acc;
  accesses(inner.body, acc);
  for (const auto& array : written(acc)) {
    if (auto why = uniform_and_pinned(array, acc, {outer.var, inner.var}, local)) {
      throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("cannot reorder {} and {}: {}", outer.var, inner.var, *why));
    }
  }
  Loop swapped{inner.var, inner.lo, inner.hi, {}};
  swapped.body.push_back({Loop{outer.var, outer.lo, outer.hi, std::move(inner.body)}});
  node_at(k, path).node = std::move(swapped);
  return k;
}

LoopNest unroll(const LoopNest& in, const ScheduleCommand& c) {
  LoopNest k = in;
  auto path = resolve(k, c.line);
  const auto l = loop_at(k, path, c.line);
  auto trips = static_cast<std::size_t>(std::max<std::int64_t>(0, l.hi - l.lo));
  auto total = count_statements(k.body) + trips * count_statements(l.body);
  if (total > kMaxUnrolledStatements) {
    throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("unrolling would produce {} statements", total));
  }
  std::vector<Stmt> copies;
  for (std::int64_t i = l.lo; i < l.hi; ++i) {
    auto body = l.body;
    subst(body, l.var, Affine{i, {}});
    copies.insert(copies.end(), std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));
  }
  auto& parent = container(k, path);
  auto at = parent.erase(parent.begin() + static_cast<std::ptrdiff_t>(path.back()));
  parent.insert(at, std::make_move_iterator(copies.begin()), std::make_move_iterator(copies.end()));
  if (k.body.empty()) throw ScheduleError(SchedErrc::IllegalRewrite, "unrolling would leave the kernel empty");
  return k;
}

std::optional<std::string> cross_conflicts(const std::vector<Access>& a, const std::vector<Access>& b,
                                           const std::string& var, const std::set<std::string>& local) {
  auto wa = written(a), wb = written(b), ta = touched(a), tb = touched(b);
  std::set<std::string> shared;
  for (const auto& x : wa) {
    if (tb.count(x)) shared.insert(x);
  }
  for (const auto& x : wb) {
    if (ta.count(x)) shared.insert(x);
  }
  std::vector<Access> both = a;
  both.insert(both.end(), b.begin(), b.end());
  for (const auto& x : shared) {
    if (auto why = uniform_and_pinned(x, both, {var}, local)) return why;
  }
  return std::nullopt;
}

LoopNest fuse(const LoopNest& in, const ScheduleCommand& c) {
  LoopNest k = in;
  auto p1 = resolve(k, c.line);
  auto p2 = resolve(k, c.line2);
  auto l1 = loop_at(k, p1, c.line);
  auto l2 = loop_at(k, p2, c.line2);
  bool siblings = p1.size() == p2.size() && std::equal(p1.begin(), p1.end() - 1, p2.begin()) && p2.back() == p1.back() + 1;
  if (!siblings) throw ScheduleError(SchedErrc::IllegalRewrite, "the loops to fuse must be adjacent siblings");
  if (l1.lo != l2.lo || l1.hi != l2.hi) throw ScheduleError(SchedErrc::IllegalRewrite, "the loops to fuse have different bounds");
  std::set<std::string> inner2;
  bound_vars(l2.body, inner2);
  if (l1.var != l2.var && inner2.count(l1.var)) {
    throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("'{}' is rebound inside the second loop", l1.var));
  }
  auto body2 = l2.body;
  if (l1.var != l2.var) subst(body2, l2.var, Affine{0, {{l1.var, 1}}});
  std::set<std::string> local{l1.var};
  bound_vars(l1.body, local);
  bound_vars(body2, local);
  std::vector<Access> a1, a2;
  accesses(l1.body, a1);
  accesses(body2, a2);
  if (auto why = cross_conflicts(a1, a2, l1.var, local)) {
    throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("cannot fuse: {}", *why));
  }
  auto& parent = container(k, p1);
  auto& fused = std::get<Loop>(parent[p1.back()].node);
  fused.body.insert(fused.body.end(), std::make_move_iterator(body2.begin()), std::make_move_iterator(body2.end()));
  parent.erase(parent.begin() + static_cast<std::ptrdiff_t>(p2.back()));
  return k;
}

LoopNest fission(const LoopNest& in, const ScheduleCommand& c) {
  LoopNest k = in;
  auto path = resolve(k, c.line);
  if (path.size() < 2) throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("`{}` is not inside a loop", trim(c.line)));
  Path loop_path(path.begin(), path.end() - 1);
  auto& l = std::get<Loop>(node_at(k, loop_path).node);
  auto split = path.back() + (c.after ? 1 : 0);
  if (split == 0 || split >= l.body.size()) {
    throw ScheduleError(SchedErrc::IllegalRewrite,
                        fmt::format("splitting {} `{}` would leave an empty loop", c.after ? "after" : "before", trim(c.line)));
  }
  std::vector<Stmt> first(l.body.begin(), l.body.begin() + static_cast<std::ptrdiff_t>(split));
  std::vector<Stmt> second(l.body.begin() + static_cast<std::ptrdiff_t>(split), l.body.end());
  std::set<std::string> local{l.var};
  bound_vars(l.body, local);
  std::vector<Access> a1, a2;
  accesses(first, a1);
  accesses(second, a2);
  if (auto why = cross_conflicts(a1, a2, l.var, local)) {
    throw ScheduleError(SchedErrc::IllegalRewrite, fmt::format("cannot fission the loop over {}: {}", l.var, *why));
  }
  Loop a{l.var, l.lo, l.hi, std::move(first)};
  Loop b{l.var, l.lo, l.hi, std::move(second)};
  auto& parent = container(k, loop_path);
  auto at = parent.begin() + static_cast<std::ptrdiff_t>(loop_path.back());
  at->node = std::move(a);
  parent.insert(at + 1, Stmt{std::move(b)});
  return k;
}

}  // namespace

std::vector<std::vector<std::size_t>> find_lines(const LoopNest& k, std::string_view line) {
  static const std::regex suffix(R"(^(.*?)\s*#\s*(\d+)\s*$)");
  std::string text(line);
  std::optional<std::size_t> occurrence;
  std::smatch m;
  if (std::regex_match(text, m, suffix)) {
    occurrence = std::stoull(m[2]);
    text = m[1];
  }
  auto want = normalize(text);
  std::vector<std::pair<Path, std::string>> all;
  Path path;
  collect_lines(k.body, path, all);
  std::vector<Path> hits;
  for (auto& [p, l] : all) {
    if (l == want) hits.push_back(p);
  }
  if (occurrence) {
    if (*occurrence >= hits.size()) return {};
    return {hits[*occurrence]};
  }
  return hits;
}

LoopNest apply_schedule_command(const LoopNest& k, const ScheduleCommand& c) {
  LoopNest out;
  switch (c.kind) {
    case CommandKind::Tile: out = tile(k, c); break;
    case CommandKind::Fuse: out = fuse(k, c); break;
    case CommandKind::Reorder: out = reorder(k, c); break;
    case CommandKind::Fission: out = fission(k, c); break;
    case CommandKind::Unroll: out = unroll(k, c); break;
  }
  check_bounds(out);
  return out;
}

ScheduleCommand scale_command(const ScheduleCommand& c, std::int64_t factor) {
  if (factor <= 1) return c;
  auto scale_line = [&](const std::string& line) {
    static const std::regex suffix(R"(^(.*?)(\s*#\s*\d+\s*)$)");
    std::smatch m;
    std::string body = line, tail;
    if (std::regex_match(line, m, suffix)) {
      body = m[1];
      tail = m[2];
    }
    static const std::regex number(R"(\b\d+\b)");
    std::string out;
    auto it = std::sregex_iterator(body.begin(), body.end(), number);
    std::size_t last = 0;
    for (; it != std::sregex_iterator(); ++it) {
      out += body.substr(last, static_cast<std::size_t>(it->position()) - last);
      auto v = std::stoll(it->str());
      out += std::to_string(v % factor == 0 ? v / factor : v);
      last = static_cast<std::size_t>(it->position() + it->length());
    }
    return out + body.substr(last) + tail;
  };
  auto s = c;
  s.line = scale_line(c.line);
  if (!c.line2.empty()) s.line2 = scale_line(c.line2);
  if (c.kind == CommandKind::Tile && c.tile_size % factor == 0) s.tile_size = c.tile_size / factor;
  return s;
}

EquivalenceVerdict check_equivalence(const LoopNest& a, const LoopNest& b, int trials, std::uint64_t seed) {
  if (a.arrays != b.arrays) {
    throw ScheduleError(SchedErrc::SignatureMismatch, "kernels declare different arrays");
  }
  std::mt19937_64 rng(seed);
  std::vector<ArrayValues> inputs(static_cast<std::size_t>(std::max(trials, 0)));
  for (auto& in : inputs) {
    for (const auto& arr : a.arrays) {
      auto& v = in[arr.name];
      v.resize(static_cast<std::size_t>(arr.elements()));
      for (auto& x : v) x = static_cast<float>(uniform_int(rng, -4, 4));
    }
  }
  std::vector<std::future<EquivalenceVerdict>> runs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    runs.push_back(std::async(std::launch::async, [&, t] {
      EquivalenceVerdict v;
      auto ra = interpret(a, inputs[t]);
      auto rb = interpret(b, inputs[t]);
      for (const auto& arr : a.arrays) {
        const auto& x = ra.at(arr.name);
        const auto& y = rb.at(arr.name);
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (std::bit_cast<std::uint32_t>(x[i]) != std::bit_cast<std::uint32_t>(y[i])) {
            v.passed = false;
            v.failing_trial = static_cast<int>(t) + 1;
            v.array = arr.name;
            v.element = i;
            v.got = y[i];
            v.want = x[i];
            return v;
          }
        }
      }
      return v;
    }));
  }
  EquivalenceVerdict out;
  out.trials = trials;
  for (auto& r : runs) {
    auto v = r.get();
    if (!v.passed && out.passed) {
      v.trials = trials;
      out = v;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// sessions

nlohmann::json transcript_json(const std::vector<StepRecord>& steps) {
  auto out = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json j;
    j["command"] = s.command ? s.command->to_json() : nlohmann::json(nullptr);
    j["result"] = s.result;
    j["cost"] = s.cost;
    j["equivalence"] = s.equivalence;
    out.push_back(std::move(j));
  }
  return out;
}

ScheduleSession::ScheduleSession(LoopNest k, SessionOptions opts)
    : opts_(opts), original_(k), current_(std::move(k)), factor_(reduction_factor(original_)) {
  try {
    reduced_original_ = scale_extents(original_, factor_);
    reduced_ = reduced_original_;
  } catch (const ScheduleError& e) {
    reduced_note_ = fmt::format("no reduced-extent clone: {}", e.what());
  }
}

const StepRecord& ScheduleSession::apply(const ScheduleCommand& c) {
  StepRecord rec;
  rec.command = c;
  LoopNest next;
  try {
    next = apply_schedule_command(current_, c);
  } catch (const ScheduleError& e) {
    rec.result = e.what();
    rec.cost = locality_cost(current_, opts_.penalty);
    steps_.push_back(std::move(rec));
    return steps_.back();
  }
  if (reduced_) {
    std::optional<LoopNest> reduced_next;
    try {
      reduced_next = apply_schedule_command(*reduced_, scale_command(c, factor_));
    } catch (const ScheduleError& e) {
      reduced_note_ = fmt::format("not replayable at reduced extents: {}", e.what());
    }
    if (reduced_next) {
      auto v = check_equivalence(*reduced_original_, *reduced_next, opts_.trials, opts_.seed + steps_.size());
      if (!v.passed) {
        rec.result = fmt::format("rewrite changed the kernel's results at reduced extents (trial {}, {}[{}])",
                                 *v.failing_trial, v.array, v.element);
        rec.cost = locality_cost(current_, opts_.penalty);
        rec.equivalence = "fail";
        steps_.push_back(std::move(rec));
        return steps_.back();
      }
      rec.equivalence = "pass";
    }
    reduced_ = std::move(reduced_next);
  }
  if (rec.equivalence.empty()) rec.equivalence = "unverified: " + reduced_note_;
  current_ = std::move(next);
  rec.ok = true;
  rec.result = "ok";
  rec.cost = locality_cost(current_, opts_.penalty);
  steps_.push_back(std::move(rec));
  return steps_.back();
}

const StepRecord& ScheduleSession::record_error(const std::string& text) {
  StepRecord rec;
  rec.result = text;
  rec.cost = locality_cost(current_, opts_.penalty);
  steps_.push_back(std::move(rec));
  return steps_.back();
}

std::string cost_line(double cost) { return fmt::format("The current locality cost is {:g} (lower is better).", cost); }

namespace {

std::string fill(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const auto token = "{" + key + "}";
    for (auto at = tmpl.find(token); at != std::string::npos; at = tmpl.find(token, at + value.size())) {
      tmpl.replace(at, token.size(), value);
    }
  }
  return tmpl;
}

std::string kernel_text(const LoopNest& k) {
  auto t = render_kernel(k);
  if (!t.empty() && t.back() == '\n') t.pop_back();
  return t;
}

}  // namespace

prompts::Prompt schedule_task_prompt(const LoopNest& k, double cost, const prompts::PromptAssets& assets) {
  std::vector<prompts::Message> messages;
  messages.push_back({prompts::Role::System, assets.schedule_system});
  messages.push_back({prompts::Role::User, fill(assets.schedule_task, {{"kernel", kernel_text(k)}, {"cost_line", cost_line(cost)}})});
  return prompts::make_prompt(std::move(messages));
}

std::vector<StepRecord> run_llm_session(const LoopNest& k, llm::Backend& backend, int max_steps,
                                        const llm::GenerationParams& params, const SessionOptions& opts,
                                        const prompts::PromptAssets& assets) {
  ScheduleSession session(k, opts);
  auto messages = schedule_task_prompt(k, locality_cost(k, opts.penalty), assets).messages;
  auto p = params;
  p.n_samples = 1;
  for (int step = 0; step < max_steps; ++step) {
    auto reply = backend.complete(prompts::make_prompt(messages), p).at(0).text;
    messages.push_back({prompts::Role::Assistant, reply});
    std::optional<ScheduleCommand> cmd;
    std::string error;
    try {
      cmd = extract_apply(reply);
    } catch (const ScheduleError& e) {
      error = e.what();
    }
    if (!cmd && error.empty()) break;
    std::string feedback;
    if (!cmd) {
      session.record_error(error);
      feedback = fill(assets.schedule_error, {{"error", error}});
    } else {
      const auto& rec = session.apply(*cmd);
      feedback = rec.ok ? fill(assets.schedule_applied,
                               {{"kernel", kernel_text(session.kernel())}, {"cost_line", cost_line(rec.cost)}})
                        : fill(assets.schedule_error, {{"error", rec.result}});
    }
    messages.push_back({prompts::Role::User, feedback});
  }
  return session.transcript();
}

}  // namespace talift::sched
