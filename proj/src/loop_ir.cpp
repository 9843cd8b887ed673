#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include "talift/loop_sched.hpp"
#include "talift/util.hpp"

namespace talift::sched {

std::string_view errc_name(SchedErrc c) {
  switch (c) {
    case SchedErrc::SyntaxError: return "SyntaxError";
    case SchedErrc::NonConstantBound: return "NonConstantBound";
    case SchedErrc::OutOfBounds: return "OutOfBounds";
    case SchedErrc::LineNotFound: return "LineNotFound";
    case SchedErrc::AmbiguousLine: return "AmbiguousLine";
    case SchedErrc::IllegalRewrite: return "IllegalRewrite";
    case SchedErrc::NonDivisibleTile: return "NonDivisibleTile";
    case SchedErrc::BadCommand: return "BadCommand";
    case SchedErrc::ShapeMismatch: return "ShapeMismatch";
    case SchedErrc::SignatureMismatch: return "SignatureMismatch";
  }
  return "?";
}

std::int64_t Affine::coeff(std::string_view var) const {
  for (const auto& [v, c] : terms) {
    if (v == var) return c;
  }
  return 0;
}

std::string render_affine(const Affine& a) {
  std::vector<std::pair<bool, std::string>> parts;  // (negative, magnitude text)
  if (a.constant != 0) parts.emplace_back(a.constant < 0, std::to_string(std::llabs(a.constant)));
  for (const auto& [v, c] : a.terms) {
    auto mag = std::llabs(c);
    parts.emplace_back(c < 0, mag == 1 ? v : fmt::format("{} * {}", mag, v));
  }
  if (parts.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i == 0) {
      out += (parts[i].first ? "-" : "") + parts[i].second;
    } else {
      out += (parts[i].first ? " - " : " + ") + parts[i].second;
    }
  }
  return out;
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Expr::Kind::Number: return a->number == b->number;
    case Expr::Kind::Var: return a->name == b->name;
    case Expr::Kind::Read: return a->name == b->name && a->index == b->index;
    default: return expr_equal(a->lhs, b->lhs) && expr_equal(a->rhs, b->rhs);
  }
}

namespace {

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    default: return 4;
  }
}

std::string render_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) return fmt::format("{:.1f}", v);
  return fmt::format("{}", v);
}

std::string render_index(const std::vector<Affine>& idx) {
  std::string out;
  for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? ", " : "") + render_affine(idx[i]);
  return out;
}

}  // namespace

std::string render_expr(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::Number: return render_number(e->number);
    case Expr::Kind::Var: return e->name;
    case Expr::Kind::Read: return fmt::format("{}[{}]", e->name, render_index(e->index));
    case Expr::Kind::Neg: {
      auto inner = render_expr(e->lhs);
      return precedence(*e->lhs) < 3 ? "-(" + inner + ")" : "-" + inner;
    }
    default: break;
  }
  const char* op = e->kind == Expr::Kind::Add ? " + " : e->kind == Expr::Kind::Sub ? " - "
                   : e->kind == Expr::Kind::Mul ? " * " : " / ";
  int p = precedence(*e);
  auto l = render_expr(e->lhs);
  auto r = render_expr(e->rhs);
  if (precedence(*e->lhs) < p) l = "(" + l + ")";
  if (precedence(*e->rhs) <= p) r = "(" + r + ")";
  return l + op + r;
}

std::int64_t ArrayDecl::elements() const {
  std::int64_t n = 1;
  for (auto e : extents) n *= e;
  return n;
}

const ArrayDecl* LoopNest::find_array(std::string_view n) const {
  for (const auto& a : arrays) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

bool equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto* la = std::get_if<Loop>(&a[i].node);
    const auto* lb = std::get_if<Loop>(&b[i].node);
    if (la && lb) {
      if (la->var != lb->var || la->lo != lb->lo || la->hi != lb->hi || !equal(la->body, lb->body)) return false;
      continue;
    }
    const auto* sa = std::get_if<Assign>(&a[i].node);
    const auto* sb = std::get_if<Assign>(&b[i].node);
    if (!sa || !sb) return false;
    if (sa->array != sb->array || sa->index != sb->index || sa->accumulate != sb->accumulate ||
        !expr_equal(sa->rhs, sb->rhs)) {
      return false;
    }
  }
  return true;
}

bool equal(const LoopNest& a, const LoopNest& b) {
  return a.name == b.name && a.arrays == b.arrays && equal(a.body, b.body);
}

std::string render_line(const Stmt& s) {
  if (const auto* l = std::get_if<Loop>(&s.node)) return fmt::format("for {} in seq({}, {}):", l->var, l->lo, l->hi);
  const auto& a = std::get<Assign>(s.node);
  return fmt::format("{}[{}] {} {}", a.array, render_index(a.index), a.accumulate ? "+=" : "=", render_expr(a.rhs));
}

namespace {

void render_body(const std::vector<Stmt>& body, int depth, std::string& out) {
  for (const auto& s : body) {
    out += std::string(static_cast<std::size_t>(4 * depth), ' ') + render_line(s) + "\n";
    if (const auto* l = std::get_if<Loop>(&s.node)) render_body(l->body, depth + 1, out);
  }
}

}  // namespace

std::string render_kernel(const LoopNest& k) {
  std::string head = fmt::format("def {}(", k.name);
  const std::string pad(head.size(), ' ');
  std::string out, line = head;
  for (std::size_t i = 0; i < k.arrays.size(); ++i) {
    const auto& a = k.arrays[i];
    std::string ext;
    for (std::size_t d = 0; d < a.extents.size(); ++d) ext += (d ? ", " : "") + std::to_string(a.extents[d]);
    std::string param = fmt::format("{}: f32[{}] @ {}", a.name, ext, a.memory);
    param += i + 1 < k.arrays.size() ? "," : "):";
    bool first_on_line = line.size() == head.size() || line == pad;
    if (!first_on_line && line.size() + 1 + param.size() > 80) {
      out += line + "\n";
      line = pad + param;
    } else {
      line += (first_on_line ? "" : " ") + param;
    }
  }
  if (k.arrays.empty()) line += "):";
  out += line + "\n";
  render_body(k.body, 1, out);
  return out;
}

// ---------------------------------------------------------------------------
// parser

namespace {

struct Token {
  enum class T : std::uint8_t { Ident, Number, Op, End } t = T::End;
  std::string text;
};

[[noreturn]] void syntax(int line, const std::string& msg) {
  throw ScheduleError(SchedErrc::SyntaxError, fmt::format("line {}: {}", line, msg));
}

std::vector<Token> tokenize(std::string_view s, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Token::T::Ident, std::string(s.substr(i, j - i))});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      out.push_back({Token::T::Number, std::string(s.substr(i, j - i))});
      i = j;
    } else if (c == '+' && i + 1 < s.size() && s[i + 1] == '=') {
      out.push_back({Token::T::Op, "+="});
      i += 2;
    } else if (std::string_view("+-*/()[],=:@").find(c) != std::string_view::npos) {
      out.push_back({Token::T::Op, std::string(1, c)});
      ++i;
    } else {
      syntax(line, fmt::format("unexpected character '{}'", c));
    }
  }
  out.push_back({Token::T::End, ""});
  return out;
}

class ExprParser {
 public:
  ExprParser(std::vector<Token> toks, int line) : toks_(std::move(toks)), line_(line) {}

  const Token& peek() const { return toks_[pos_]; }
  bool accept(std::string_view op) {
    if (peek().t == Token::T::Op && peek().text == op) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view op) {
    if (!accept(op)) syntax(line_, fmt::format("expected '{}' near '{}'", op, peek().text));
  }
  std::string ident() {
    if (peek().t != Token::T::Ident) syntax(line_, fmt::format("expected a name near '{}'", peek().text));
    return toks_[pos_++].text;
  }
  bool at_end() const { return peek().t == Token::T::End; }

  ExprPtr expr() {
    auto l = term();
    while (true) {
      if (accept("+")) {
        l = binary(Expr::Kind::Add, l, term());
      } else if (accept("-")) {
        l = binary(Expr::Kind::Sub, l, term());
      } else {
        return l;
      }
    }
  }

  std::vector<Affine> index_list();

 private:
  static ExprPtr binary(Expr::Kind k, ExprPtr l, ExprPtr r) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
  }

  ExprPtr term() {
    auto l = unary();
    while (true) {
      if (accept("*")) {
        l = binary(Expr::Kind::Mul, l, unary());
      } else if (accept("/")) {
        l = binary(Expr::Kind::Div, l, unary());
      } else {
        return l;
      }
    }
  }

  ExprPtr unary() {
    if (accept("-")) {
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Neg;
      e->lhs = unary();
      return e;
    }
    return primary();
  }

  ExprPtr primary() {
    const auto& t = peek();
    if (t.t == Token::T::Number) {
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Number;
      try {
        e->number = std::stod(t.text);
      } catch (const std::exception&) {
        syntax(line_, fmt::format("bad number '{}'", t.text));
      }
      ++pos_;
      return e;
    }
    if (accept("(")) {
      auto e = expr();
      expect(")");
      return e;
    }
    auto name = ident();
    auto e = std::make_shared<Expr>();
    if (accept("[")) {
      e->kind = Expr::Kind::Read;
      e->name = name;
      e->index = index_list();
      return e;
    }
    e->kind = Expr::Kind::Var;
    e->name = name;
    return e;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
};

Affine to_affine(const ExprPtr& e, int line) {
  auto scale = [](Affine a, std::int64_t s) {
    a.constant *= s;
    for (auto& t : a.terms) t.second *= s;
    std::erase_if(a.terms, [](const auto& t) { return t.second == 0; });
    return a;
  };
  auto add = [](Affine a, const Affine& b) {
    a.constant += b.constant;
    for (const auto& [v, c] : b.terms) {
      auto it = std::find_if(a.terms.begin(), a.terms.end(), [&](const auto& t) { return t.first == v; });
      if (it == a.terms.end()) {
        a.terms.emplace_back(v, c);
      } else {
        it->second += c;
      }
    }
    std::erase_if(a.terms, [](const auto& t) { return t.second == 0; });
    return a;
  };
  switch (e->kind) {
    case Expr::Kind::Number:
      if (e->number != std::floor(e->number)) syntax(line, "index constants must be integers");
      return Affine{static_cast<std::int64_t>(e->number), {}};
    case Expr::Kind::Var: return Affine{0, {{e->name, 1}}};
    case Expr::Kind::Neg: return scale(to_affine(e->lhs, line), -1);
    case Expr::Kind::Add: return add(to_affine(e->lhs, line), to_affine(e->rhs, line));
    case Expr::Kind::Sub: return add(to_affine(e->lhs, line), scale(to_affine(e->rhs, line), -1));
    case Expr::Kind::Mul: {
      auto l = to_affine(e->lhs, line);
      auto r = to_affine(e->rhs, line);
      if (l.is_constant()) return scale(r, l.constant);
      if (r.is_constant()) return scale(l, r.constant);
      syntax(line, "index expressions must be affine");
    }
    default: syntax(line, "index expressions must be affine in loop variables");
  }
}

std::vector<Affine> ExprParser::index_list() {
  std::vector<Affine> out;
  do {
    out.push_back(to_affine(expr(), line_));
  } while (accept(","));
  expect("]");
  return out;
}

struct SrcLine {
  int indent = 0;
  int number = 0;
  std::string text;
};

std::vector<SrcLine> logical_lines(std::string_view text) {
  std::vector<SrcLine> out;
  int depth = 0;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;
    std::string line(raw);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.find('\t') != std::string::npos) syntax(number, "tabs are not allowed in indentation");
    if (depth > 0) {
      out.back().text += " " + trim(line);
    } else {
      int indent = static_cast<int>(line.find_first_not_of(' '));
      out.push_back({indent, number, line.substr(static_cast<std::size_t>(indent))});
    }
    for (char c : line) {
      if (c == '(' || c == '[') ++depth;
      if (c == ')' || c == ']') --depth;
    }
    if (depth < 0) syntax(number, "unbalanced brackets");
  }
  if (depth != 0) syntax(number, "unbalanced brackets at end of input");
  return out;
}

std::int64_t constant_bound(const std::string& s, int line) {
  static const std::regex integer(R"(-?\d+)");
  auto t = trim(s);
  if (!std::regex_match(t, integer)) {
    throw ScheduleError(SchedErrc::NonConstantBound, fmt::format("line {}: loop bound '{}' is not a constant", line, t));
  }
  return std::stoll(t);
}

class KernelParser {
 public:
  explicit KernelParser(std::vector<SrcLine> lines) : lines_(std::move(lines)) {}

  LoopNest parse() {
    if (lines_.empty()) syntax(1, "empty kernel text");
    LoopNest k;
    header(lines_[0], k);
    k_ = &k;
    pos_ = 1;
    if (pos_ >= lines_.size() || lines_[pos_].indent <= lines_[0].indent) syntax(lines_[0].number, "kernel body is empty");
    std::vector<std::string> scope;
    k.body = block(lines_[pos_].indent, scope);
    if (pos_ < lines_.size()) syntax(lines_[pos_].number, "unexpected indentation");
    return k;
  }

 private:
  void header(const SrcLine& l, LoopNest& k) {
    static const std::regex def(R"(def\s+(\w+)\s*\((.*)\)\s*:)");
    std::smatch m;
    if (!std::regex_match(l.text, m, def)) syntax(l.number, "expected 'def name(...):'");
    k.name = m[1];
    std::string params = m[2];
    static const std::regex param(R"(\s*(\w+)\s*:\s*f32\s*\[([^\]]*)\]\s*(?:@\s*(\w+))?\s*(,|$))");
    auto it = params.cbegin();
    std::smatch pm;
    while (it != params.cend() && std::regex_search(it, params.cend(), pm, param, std::regex_constants::match_continuous)) {
      ArrayDecl a;
      a.name = pm[1];
      if (pm[3].matched) a.memory = pm[3];
      std::string ext = pm[2];
      std::size_t s = 0;
      while (s <= ext.size()) {
        auto comma = ext.find(',', s);
        auto piece = ext.substr(s, comma == std::string::npos ? std::string::npos : comma - s);
        auto v = constant_bound(piece, l.number);
        if (v <= 0) syntax(l.number, fmt::format("array {} has a non-positive extent", a.name));
        a.extents.push_back(v);
        if (comma == std::string::npos) break;
        s = comma + 1;
      }
      if (k.find_array(a.name)) syntax(l.number, fmt::format("array {} declared twice", a.name));
      k.arrays.push_back(std::move(a));
      it = pm[0].second;
    }
    if (trim(std::string(it, params.cend())).size() > 0) syntax(l.number, "bad parameter list");
  }

  std::vector<Stmt> block(int indent, std::vector<std::string>& scope) {
    std::vector<Stmt> out;
    while (pos_ < lines_.size() && lines_[pos_].indent >= indent) {
      const auto& l = lines_[pos_];
      if (l.indent != indent) syntax(l.number, "unexpected indentation");
      ++pos_;
      static const std::regex loop(R"(for\s+(\w+)\s+in\s+seq\s*\(([^,]*),([^)]*)\)\s*:)");
      std::smatch m;
      if (std::regex_match(l.text, m, loop)) {
        Loop lp;
        lp.var = m[1];
        lp.lo = constant_bound(m[2], l.number);
        lp.hi = constant_bound(m[3], l.number);
        if (pos_ >= lines_.size() || lines_[pos_].indent <= indent) syntax(l.number, "loop body is empty");
        scope.push_back(lp.var);
        lp.body = block(lines_[pos_].indent, scope);
        scope.pop_back();
        out.push_back({std::move(lp)});
      } else if (l.text.rfind("for ", 0) == 0) {
        syntax(l.number, "expected 'for var in seq(lo, hi):'");
      } else {
        out.push_back({assign(l, scope)});
      }
    }
    return out;
  }

  void check_vars(const Affine& a, const std::vector<std::string>& scope, int line) {
    for (const auto& [v, c] : a.terms) {
      if (std::find(scope.begin(), scope.end(), v) == scope.end()) syntax(line, fmt::format("unknown variable '{}'", v));
    }
  }

  void check_access(const std::string& array, const std::vector<Affine>& idx, const std::vector<std::string>& scope,
                    int line) {
    const auto* a = k_->find_array(array);
    if (!a) syntax(line, fmt::format("unknown array '{}'", array));
    if (a->extents.size() != idx.size()) {
      syntax(line, fmt::format("array {} has {} dimensions, indexed with {}", array, a->extents.size(), idx.size()));
    }
    for (const auto& i : idx) check_vars(i, scope, line);
  }

  void check_expr(const ExprPtr& e, const std::vector<std::string>& scope, int line) {
    switch (e->kind) {
      case Expr::Kind::Number: return;
      case Expr::Kind::Var:
        if (std::find(scope.begin(), scope.end(), e->name) == scope.end()) {
          syntax(line, fmt::format("unknown variable '{}'", e->name));
        }
        return;
      case Expr::Kind::Read: check_access(e->name, e->index, scope, line); return;
      case Expr::Kind::Neg: check_expr(e->lhs, scope, line); return;
      default:
        check_expr(e->lhs, scope, line);
        check_expr(e->rhs, scope, line);
    }
  }

  Assign assign(const SrcLine& l, const std::vector<std::string>& scope) {
    ExprParser p(tokenize(l.text, l.number), l.number);
    Assign a;
    a.array = p.ident();
    p.expect("[");
    a.index = p.index_list();
    if (p.accept("+=")) {
      a.accumulate = true;
    } else {
      p.expect("=");
    }
    a.rhs = p.expr();
    if (!p.at_end()) syntax(l.number, fmt::format("unexpected '{}'", p.peek().text));
    check_access(a.array, a.index, scope, l.number);
    check_expr(a.rhs, scope, l.number);
    return a;
  }

  std::vector<SrcLine> lines_;
  std::size_t pos_ = 0;
  LoopNest* k_ = nullptr;
};

// interval analysis

using Ranges = std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>>;

std::pair<std::int64_t, std::int64_t> range_of(const Affine& a, const Ranges& env) {
  std::int64_t lo = a.constant, hi = a.constant;
  for (const auto& [v, c] : a.terms) {
    auto it = std::find_if(env.rbegin(), env.rend(), [&](const auto& e) { return e.first == v; });
    auto [vlo, vhi] = it->second;
    lo += std::min(c * vlo, c * vhi);
    hi += std::max(c * vlo, c * vhi);
  }
  return {lo, hi};
}

void check_access_bounds(const LoopNest& k, const std::string& array, const std::vector<Affine>& idx,
                         const Ranges& env) {
  const auto* a = k.find_array(array);
  for (std::size_t d = 0; d < idx.size(); ++d) {
    auto [lo, hi] = range_of(idx[d], env);
    if (lo < 0 || hi >= a->extents[d]) {
      throw ScheduleError(SchedErrc::OutOfBounds,
                          fmt::format("{}[{}] reaches {}..{} in dimension {} of extent {}", array,
                                      render_index(idx), lo, hi, d, a->extents[d]));
    }
  }
}

void check_expr_bounds(const LoopNest& k, const ExprPtr& e, const Ranges& env) {
  if (e->kind == Expr::Kind::Read) check_access_bounds(k, e->name, e->index, env);
  if (e->lhs) check_expr_bounds(k, e->lhs, env);
  if (e->rhs) check_expr_bounds(k, e->rhs, env);
}

void check_bounds_body(const LoopNest& k, const std::vector<Stmt>& body, Ranges& env) {
  for (const auto& s : body) {
    if (const auto* l = std::get_if<Loop>(&s.node)) {
      if (l->hi <= l->lo) continue;
      env.push_back({l->var, {l->lo, l->hi - 1}});
      check_bounds_body(k, l->body, env);
      env.pop_back();
    } else {
      const auto& a = std::get<Assign>(s.node);
      check_access_bounds(k, a.array, a.index, env);
      check_expr_bounds(k, a.rhs, env);
    }
  }
}

}  // namespace

void check_bounds(const LoopNest& k) {
  Ranges env;
  check_bounds_body(k, k.body, env);
}

LoopNest parse_kernel(std::string_view text) {
  auto k = KernelParser(logical_lines(text)).parse();
  check_bounds(k);
  return k;
}

LoopNest load_kernel(const std::filesystem::path& p) { return parse_kernel(read_file(p)); }

// ---------------------------------------------------------------------------
// interpreter

namespace {

class Interpreter {
 public:
  Interpreter(const LoopNest& k, ArrayValues& mem) : k_(k), mem_(mem) {
    for (const auto& a : k.arrays) {
      std::vector<std::int64_t> strides(a.extents.size(), 1);
      for (std::size_t d = a.extents.size(); d-- > 1;) strides[d - 1] = strides[d] * a.extents[d];
      strides_[a.name] = std::move(strides);
    }
  }

  void run(const std::vector<Stmt>& body) {
    for (const auto& s : body) {
      if (const auto* l = std::get_if<Loop>(&s.node)) {
        env_.emplace_back(l->var, 0);
        for (std::int64_t i = l->lo; i < l->hi; ++i) {
          env_.back().second = i;
          run(l->body);
        }
        env_.pop_back();
      } else {
        const auto& a = std::get<Assign>(s.node);
        float v = eval(a.rhs);
        float& dst = at(a.array, a.index);
        dst = a.accumulate ? dst + v : v;
      }
    }
  }

 private:
  std::int64_t value(const std::string& v) const {
    for (auto it = env_.rbegin(); it != env_.rend(); ++it) {
      if (it->first == v) return it->second;
    }
    throw ScheduleError(SchedErrc::SyntaxError, fmt::format("unbound variable '{}'", v));
  }

  std::int64_t eval(const Affine& a) const {
    std::int64_t v = a.constant;
    for (const auto& [n, c] : a.terms) v += c * value(n);
    return v;
  }

  float& at(const std::string& array, const std::vector<Affine>& idx) {
    const auto& strides = strides_.at(array);
    std::int64_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += eval(idx[d]) * strides[d];
    return mem_.at(array).at(static_cast<std::size_t>(off));
  }

  float eval(const ExprPtr& e) {
    switch (e->kind) {
      case Expr::Kind::Number: return static_cast<float>(e->number);
      case Expr::Kind::Var: return static_cast<float>(value(e->name));
      case Expr::Kind::Read: return at(e->name, e->index);
      case Expr::Kind::Neg: return -eval(e->lhs);
      case Expr::Kind::Add: return eval(e->lhs) + eval(e->rhs);
      case Expr::Kind::Sub: return eval(e->lhs) - eval(e->rhs);
      case Expr::Kind::Mul: return eval(e->lhs) * eval(e->rhs);
      case Expr::Kind::Div: return eval(e->lhs) / eval(e->rhs);
    }
    return 0.0f;
  }

  const LoopNest& k_;
  ArrayValues& mem_;
  std::map<std::string, std::vector<std::int64_t>> strides_;
  std::vector<std::pair<std::string, std::int64_t>> env_;
};

}  // namespace

ArrayValues interpret(const LoopNest& k, const ArrayValues& inputs) {
  for (const auto& [name, v] : inputs) {
    const auto* a = k.find_array(name);
    if (!a) throw ScheduleError(SchedErrc::ShapeMismatch, fmt::format("kernel has no array '{}'", name));
    if (static_cast<std::int64_t>(v.size()) != a->elements()) {
      throw ScheduleError(SchedErrc::ShapeMismatch,
                          fmt::format("array {} needs {} elements, got {}", name, a->elements(), v.size()));
    }
  }
  ArrayValues mem;
  for (const auto& a : k.arrays) {
    auto it = inputs.find(a.name);
    mem[a.name] = it != inputs.end() ? it->second : std::vector<float>(static_cast<std::size_t>(a.elements()), 0.0f);
  }
  Interpreter(k, mem).run(k.body);
  return mem;
}

// ---------------------------------------------------------------------------
// cost

namespace {

struct CostWalk {
  const LoopNest& k;
  double penalty;
  std::vector<std::string> loops;
  double total = 0;

  void access(const std::string& array, const std::vector<Affine>& idx, double mult) {
    const auto* a = k.find_array(array);
    for (auto it = loops.rbegin(); it != loops.rend(); ++it) {
      std::int64_t stride = 0, row = 1;
      bool appears = false;
      for (std::size_t d = idx.size(); d-- > 0;) {
        auto c = idx[d].coeff(*it);
        appears = appears || c != 0;
        stride += c * row;
        row *= a->extents[d];
      }
      if (!appears) continue;
      if (std::llabs(stride) != 1) total += penalty * mult;
      return;
    }
  }

  void expr(const ExprPtr& e, double mult) {
    if (e->kind == Expr::Kind::Read) access(e->name, e->index, mult);
    if (e->lhs) expr(e->lhs, mult);
    if (e->rhs) expr(e->rhs, mult);
  }

  void body(const std::vector<Stmt>& b, double mult) {
    for (const auto& s : b) {
      if (const auto* l = std::get_if<Loop>(&s.node)) {
        double trips = static_cast<double>(std::max<std::int64_t>(0, l->hi - l->lo));
        total += mult * trips;
        loops.push_back(l->var);
        body(l->body, mult * trips);
        loops.pop_back();
      } else {
        const auto& a = std::get<Assign>(s.node);
        total += mult;
        access(a.array, a.index, mult);
        expr(a.rhs, mult);
      }
    }
  }
};

std::int64_t scaled(std::int64_t c, std::int64_t f) { return f > 1 && c % f == 0 ? c / f : c; }

Affine scale_affine(Affine a, std::int64_t f) {
  a.constant = scaled(a.constant, f);
  for (auto& t : a.terms) t.second = scaled(t.second, f);
  return a;
}

ExprPtr scale_expr(const ExprPtr& e, std::int64_t f) {
  auto out = std::make_shared<Expr>(*e);
  for (auto& i : out->index) i = scale_affine(i, f);
  if (e->lhs) out->lhs = scale_expr(e->lhs, f);
  if (e->rhs) out->rhs = scale_expr(e->rhs, f);
  return out;
}

void scale_body(std::vector<Stmt>& body, std::int64_t f) {
  for (auto& s : body) {
    if (auto* l = std::get_if<Loop>(&s.node)) {
      l->lo = scaled(l->lo, f);
      l->hi = scaled(l->hi, f);
      scale_body(l->body, f);
    } else {
      auto& a = std::get<Assign>(s.node);
      for (auto& i : a.index) i = scale_affine(i, f);
      a.rhs = scale_expr(a.rhs, f);
    }
  }
}

}  // namespace

double locality_cost(const LoopNest& k, double penalty) {
  CostWalk w{k, penalty, {}, 0};
  w.body(k.body, 1.0);
  return w.total;
}

LoopNest scale_extents(const LoopNest& k, std::int64_t factor) {
  LoopNest out = k;
  if (factor <= 1) return out;
  for (auto& a : out.arrays) {
    for (auto& e : a.extents) e = scaled(e, factor);
  }
  scale_body(out.body, factor);
  check_bounds(out);
  return out;
}

std::int64_t reduction_factor(const LoopNest& k) {
  std::int64_t largest = 0;
  for (const auto& a : k.arrays) {
    for (auto e : a.extents) largest = std::max(largest, e);
  }
  if (largest <= 8 || largest % 8 != 0) return 1;
  return largest / 8;
}

}  // namespace talift::sched
