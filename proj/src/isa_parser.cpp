// Parser for the C-subset program dialect. Loops and conditionals are
// executed while parsing (the cursor rewinds over loop bodies), so the
// result is always a straight-line instruction list.

#include <fmt/format.h>

#include <cctype>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "talift/isa.hpp"

namespace talift::isa {
namespace {

enum class Tok : std::uint8_t { Ident, Int, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::uint64_t value = 0;
  int line = 0;
};

[[noreturn]] void syntax(int line, std::string detail) {
  throw IsaError(IsaErrc::Syntax, line, std::move(detail));
}

std::vector<Token> lex(std::string_view src) {
  static const std::vector<std::string_view> kPuncts = {
      "<<=", ">>=", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "++", "--", "+=", "-=",
      "*=",  "|=",  "&=", "(",  ")",  "{",  "}",  "[",  "]",  ";",  ",",  "+",  "-",  "*",
      "/",   "%",   "|",  "&",  "^",  "~",  "!",  "<",  ">",  "=",  "?",  ":"};
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  bool line_start = true;
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      line_start = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    // Preprocessor lines (#include, #define) and prompt markers are ignored.
    if (c == '#' && line_start) {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    line_start = false;
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
      i += 2;
      while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/')) {
        if (src[i] == '\n') ++line;
        ++i;
      }
      if (i + 1 >= src.size()) syntax(line, "unterminated block comment");
      i += 2;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Tok::Ident, std::string(src.substr(i, j - i)), 0, line});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      std::uint64_t v = 0;
      int base = 10;
      if (c == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
        base = 16;
        j += 2;
      } else if (c == '0') {
        base = 8;
      }
      std::size_t digits_start = j;
      while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j]))) {
        char d = src[j];
        int dv = std::isdigit(static_cast<unsigned char>(d)) ? d - '0'
                                                            : std::tolower(d) - 'a' + 10;
        if (dv >= base) {
          if (base == 16 || std::isdigit(static_cast<unsigned char>(d))) {
            syntax(line, fmt::format("invalid digit in literal '{}'", src.substr(i, j - i + 1)));
          }
          break;
        }
        if (v > (UINT64_MAX - dv) / base) syntax(line, "integer literal too large");
        v = v * base + dv;
        ++j;
      }
      if (base == 16 && j == digits_start) syntax(line, "malformed hex literal");
      if (j < src.size() && (src[j] == '.' || src[j] == 'e' || src[j] == 'f')) {
        syntax(line, "floating point literals are not supported");
      }
      while (j < src.size() && (src[j] == 'u' || src[j] == 'U' || src[j] == 'l' || src[j] == 'L')) ++j;
      if (j < src.size() && (std::isalpha(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        syntax(line, fmt::format("malformed literal near '{}'", src.substr(i, j - i + 1)));
      }
      out.push_back({Tok::Int, std::string(src.substr(i, j - i)), v, line});
      i = j;
      continue;
    }
    bool matched = false;
    for (auto p : kPuncts) {
      if (src.substr(i, p.size()) == p) {
        out.push_back({Tok::Punct, std::string(p), 0, line});
        i += p.size();
        matched = true;
        break;
      }
    }
    if (!matched) syntax(line, fmt::format("unexpected character '{}'", c));
  }
  out.push_back({Tok::End, "", 0, line});
  return out;
}

struct Value {
  std::int64_t v = 0;
  std::optional<std::string> buffer;  // set when the value is a DRAM pointer
};

enum class IntType : std::uint8_t { U32, I32, I64, U64 };

const std::unordered_set<std::string_view> kTypeWords = {
    "static", "const",   "volatile", "unsigned", "signed",   "int",     "long",
    "short",  "uint32_t", "int32_t", "uint64_t", "int64_t", "size_t",  "uint16_t",
    "int16_t", "uint8_t", "int8_t",  "auto",     "elem_t",  "acc_t"};

const std::unordered_map<std::string_view, std::int64_t> kBuiltinConstants = {
    {"WEIGHT_STATIONARY", 1}, {"OUTPUT_STATIONARY", 0}, {"NO_ACTIVATION", 0},
    {"RELU", 1},              {"LAYERNORM", 2},         {"IGELU", 3},
    {"SOFTMAX", 4},           {"true", 1},              {"false", 0},
    {"GARBAGE_ADDR", 0xffffffffLL}};

const std::map<std::string_view, int> kFunctions = {
    {"config_ex", 4},         {"config_ld", 2},          {"config_st", 1}, {"mvin", 4},
    {"mvin2", 4},             {"mvin3", 4},              {"preload", 6},   {"preload_zeros", 1},
    {"compute_preloaded", 6}, {"compute_accumulated", 6}, {"mvout", 4},     {"fence", 0}};

class Parser {
 public:
  Parser(std::vector<Token> toks, const BufferTable& buffers, const ParseOptions& opts)
      : toks_(std::move(toks)), opts_(opts) {
    prog_.buffers = buffers;
  }

  Program run() {
    scopes_.emplace_back();
    while (peek().kind != Tok::End) statement(true, /*top_level=*/true);
    return std::move(prog_);
  }

 private:
  // --- token helpers -------------------------------------------------------
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Punct && t.text == p;
  }
  bool is_ident(std::string_view s, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Ident && t.text == s;
  }
  bool accept(std::string_view p) {
    if (is_punct(p)) {
      next();
      return true;
    }
    return false;
  }
  void expect(std::string_view p) {
    if (!accept(p)) {
      const Token& t = peek();
      syntax(t.line, fmt::format("expected '{}' but found '{}'", p,
                                 t.kind == Tok::End ? "end of input" : t.text));
    }
  }
  std::string expect_ident() {
    const Token& t = peek();
    if (t.kind != Tok::Ident) syntax(t.line, fmt::format("expected identifier, found '{}'", t.text));
    next();
    return t.text;
  }

  // --- scopes --------------------------------------------------------------
  std::int64_t* lookup(const std::string& name) {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return &f->second.first;
    }
    return nullptr;
  }
  std::size_t scope_of(const std::string& name) const {
    for (std::size_t i = scopes_.size(); i-- > 0;) {
      if (scopes_[i].count(name)) return i;
    }
    return SIZE_MAX;
  }
  IntType* lookup_type(const std::string& name) {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return &f->second.second;
    }
    return nullptr;
  }
  static std::int64_t coerce(std::int64_t v, IntType t) {
    switch (t) {
      case IntType::U32: return static_cast<std::int64_t>(static_cast<std::uint32_t>(v));
      case IntType::I32: return static_cast<std::int64_t>(static_cast<std::int32_t>(v));
      case IntType::I64:
      case IntType::U64: return v;
    }
    return v;
  }
  void record_symbol(const std::string& name, std::int64_t v) {
    auto value = static_cast<std::uint32_t>(v);
    for (auto& [n, val] : prog_.symbols) {
      if (n == name) {
        val = value;
        return;
      }
    }
    prog_.symbols.emplace_back(name, value);
  }

  // --- statements ----------------------------------------------------------
  bool at_type_word() const {
    const Token& t = peek();
    return t.kind == Tok::Ident && kTypeWords.count(t.text) > 0;
  }

  void statement(bool exec, bool top_level = false) {
    const Token& t = peek();
    if (t.kind == Tok::End) syntax(t.line, "unexpected end of input");
    if (is_punct("{")) {
      next();
      scopes_.emplace_back();
      while (!is_punct("}")) {
        if (peek().kind == Tok::End) syntax(peek().line, "missing '}'");
        statement(exec);
      }
      next();
      scopes_.pop_back();
      return;
    }
    if (accept(";")) return;
    if (t.kind == Tok::Ident) {
      if (t.text == "for") return for_statement(exec);
      if (t.text == "if") return if_statement(exec);
      if (t.text == "return") {
        next();
        if (!is_punct(";")) expr(false);
        expect(";");
        return;
      }
      if (t.text == "void" && top_level && peek(1).kind == Tok::Ident && is_punct("(", 2)) {
        // `void test(A, B, C) { ... }` wrapper around the program body.
        next();
        next();
        skip_balanced("(", ")");
        if (!is_punct("{")) syntax(peek().line, "expected function body");
        statement(exec);
        return;
      }
      if (kTypeWords.count(t.text) > 0) {
        declaration(exec, /*record=*/true);
        expect(";");
        return;
      }
      if (is_punct("(", 1)) return call(exec);
      assignment(exec);
      expect(";");
      return;
    }
    if (is_punct("++") || is_punct("--")) {
      assignment(exec);
      expect(";");
      return;
    }
    syntax(t.line, fmt::format("unexpected '{}'", t.text));
  }

  void skip_balanced(std::string_view open, std::string_view close) {
    expect(open);
    int depth = 1;
    while (depth > 0) {
      const Token& t = next();
      if (t.kind == Tok::End) syntax(t.line, fmt::format("missing '{}'", close));
      if (t.kind == Tok::Punct && t.text == open) ++depth;
      if (t.kind == Tok::Punct && t.text == close) --depth;
    }
  }

  void declaration(bool exec, bool record) {
    IntType type = IntType::I64;
    bool is_unsigned = false;
    bool saw_32 = false;
    bool saw_int = false;
    while (at_type_word()) {
      const std::string& w = next().text;
      if (w == "unsigned") is_unsigned = true;
      if (w == "uint32_t" || w == "uint16_t" || w == "uint8_t") {
        is_unsigned = true;
        saw_32 = true;
      }
      if (w == "int32_t" || w == "int16_t" || w == "int8_t") saw_32 = true;
      if (w == "int" || w == "short") saw_int = true;
      if (w == "uint64_t" || w == "size_t") {
        is_unsigned = true;
        type = IntType::U64;
      }
    }
    if (type != IntType::U64) {
      if (saw_32 || saw_int) type = is_unsigned ? IntType::U32 : IntType::I32;
      else if (is_unsigned) type = IntType::U32;
    }
    int line = peek().line;
    std::string name = expect_ident();
    if (kBuiltinConstants.count(name) || kFunctions.count(name)) {
      syntax(line, fmt::format("'{}' is a reserved name", name));
    }
    std::int64_t value = 0;
    if (accept("=")) {
      Value v = expr(exec);
      if (exec && v.buffer) syntax(line, "DRAM pointers cannot be stored in integer variables");
      value = coerce(v.v, type);
    }
    if (exec) {
      scopes_.back()[name] = {value, type};
      if (record && loop_depth_ == 0) {
        record_symbol(name, value);
        symbol_scope_[name] = scopes_.size() - 1;
      }
    }
  }

  void assignment(bool exec) {
    int line = peek().line;
    if (is_punct("++") || is_punct("--")) {
      bool inc = next().text == "++";
      std::string name = expect_ident();
      if (exec) update(name, line, [inc](std::int64_t v) { return inc ? v + 1 : v - 1; });
      return;
    }
    std::string name = expect_ident();
    const Token& op = peek();
    if (op.kind != Tok::Punct) syntax(op.line, fmt::format("unexpected '{}' after '{}'", op.text, name));
    std::string o = op.text;
    next();
    if (o == "++" || o == "--") {
      if (exec) update(name, line, [&](std::int64_t v) { return o == "++" ? v + 1 : v - 1; });
      return;
    }
    static const std::unordered_set<std::string_view> kAssignOps = {"=",  "+=", "-=", "*=",
                                                                     "|=", "&=", "<<=", ">>="};
    if (!kAssignOps.count(o)) syntax(line, fmt::format("unexpected '{}' after '{}'", o, name));
    Value rhs = expr(exec);
    if (!exec) return;
    if (rhs.buffer) syntax(line, "DRAM pointers cannot be stored in integer variables");
    std::int64_t r = rhs.v;
    update(name, line, [&](std::int64_t v) -> std::int64_t {
      if (o == "=") return r;
      if (o == "+=") return v + r;
      if (o == "-=") return v - r;
      if (o == "*=") return v * r;
      if (o == "|=") return v | r;
      if (o == "&=") return v & r;
      if (o == "<<=") return shift_left(v, r, line);
      return r >= 0 && r < 64 ? (v >> r) : 0;
    });
  }

  template <class F>
  void update(const std::string& name, int line, F&& f) {
    std::int64_t* slot = lookup(name);
    if (!slot) unbound(name, line);
    *slot = coerce(f(*slot), *lookup_type(name));
    // Top-level declarations keep their last assigned value in the symbol table.
    auto rec = symbol_scope_.find(name);
    if (rec != symbol_scope_.end() && scope_of(name) == rec->second) {
      for (auto& [n, val] : prog_.symbols) {
        if (n == name) val = static_cast<std::uint32_t>(*slot);
      }
    }
  }

  [[noreturn]] void unbound(const std::string& name, int line) const {
    if (in_loop_header_) {
      throw IsaError(IsaErrc::NonConstantLoopBound, line,
                     fmt::format("loop header uses '{}', which is not a compile-time constant", name));
    }
    throw IsaError(IsaErrc::UnboundSymbol, line, fmt::format("unknown identifier '{}'", name));
  }

  void for_statement(bool exec) {
    int line = next().line;  // 'for'
    expect("(");
    scopes_.emplace_back();
    in_loop_header_ = true;
    if (!is_punct(";")) {
      if (at_type_word()) {
        declaration(exec, /*record=*/false);
      } else {
        assignment(exec);
      }
    }
    expect(";");
    std::size_t cond_pos = pos_;
    bool has_cond = !is_punct(";");
    if (has_cond) expr(false);
    expect(";");
    std::size_t step_pos = pos_;
    bool has_step = !is_punct(")");
    if (has_step) assignment(false);
    expect(")");
    in_loop_header_ = false;
    std::size_t body_pos = pos_;
    ++loop_depth_;
    statement(false);
    std::size_t end_pos = pos_;

    if (exec) {
      if (!has_cond) syntax(line, "loops without a condition are not supported");
      std::size_t iterations = 0;
      while (true) {
        pos_ = cond_pos;
        in_loop_header_ = true;
        Value c = expr(true);
        in_loop_header_ = false;
        if (c.v == 0) break;
        if (++loop_iterations_ > opts_.max_loop_iterations || ++iterations > opts_.max_loop_iterations) {
          syntax(line, "loop iteration limit exceeded");
        }
        pos_ = body_pos;
        statement(true);
        if (has_step) {
          pos_ = step_pos;
          in_loop_header_ = true;
          assignment(true);
          in_loop_header_ = false;
        }
      }
    }
    pos_ = end_pos;
    --loop_depth_;
    scopes_.pop_back();
  }

  void if_statement(bool exec) {
    next();  // 'if'
    expect("(");
    Value c = expr(exec);
    expect(")");
    bool take = exec && c.v != 0;
    statement(take);
    if (is_ident("else")) {
      next();
      statement(exec && !take);
    }
  }

  // --- calls ---------------------------------------------------------------
  void call(bool exec) {
    const Token& name_tok = next();
    std::string name = name_tok.text;
    int line = name_tok.line;
    auto f = kFunctions.find(name);
    if (f == kFunctions.end()) {
      throw IsaError(IsaErrc::UnknownFunction, line, fmt::format("unknown function '{}'", name));
    }
    expect("(");
    std::vector<Value> args;
    if (!is_punct(")")) {
      do {
        args.push_back(expr(exec));
      } while (accept(","));
    }
    expect(")");
    expect(";");
    if (static_cast<int>(args.size()) != f->second) {
      syntax(line, fmt::format("{} expects {} arguments, got {}", name, f->second, args.size()));
    }
    if (!exec) return;
    emit(name, args, line);
  }

  std::int64_t integer(const Value& v, int line, std::string_view what) const {
    if (v.buffer) syntax(line, fmt::format("{} must be an integer, not a DRAM pointer", what));
    return v.v;
  }
  std::uint32_t positive(const Value& v, int line, std::string_view what) const {
    std::int64_t x = integer(v, line, what);
    if (x <= 0 || x > 0xffffffffLL) syntax(line, fmt::format("{} must be positive, got {}", what, x));
    return static_cast<std::uint32_t>(x);
  }
  std::uint32_t non_negative(const Value& v, int line, std::string_view what) const {
    std::int64_t x = integer(v, line, what);
    if (x < 0 || x > 0xffffffffLL) syntax(line, fmt::format("{} must be non-negative, got {}", what, x));
    return static_cast<std::uint32_t>(x);
  }
  LocalAddr local(const Value& v, int line) const {
    return LocalAddr{static_cast<std::uint32_t>(integer(v, line, "local address"))};
  }
  DramRef dram(const Value& v, int line) const {
    if (!v.buffer) syntax(line, "expected a DRAM buffer operand");
    if (v.v < 0 || v.v > 0xffffffffLL) syntax(line, fmt::format("DRAM offset {} out of range", v.v));
    return DramRef{*v.buffer, static_cast<std::uint32_t>(v.v)};
  }

  void check_rows(std::uint32_t rows, int line) {
    if (opts_.dim && rows > *opts_.dim) {
      throw IsaError(IsaErrc::RowsExceedDim, line,
                     fmt::format("rows {} exceeds DIM {}", rows, *opts_.dim),
                     prog_.instructions.size());
    }
  }

  void push(Instruction ins, int line) {
    if (prog_.instructions.size() >= opts_.max_instructions) {
      syntax(line, "program exceeds the instruction limit");
    }
    prog_.instructions.push_back(std::move(ins));
  }

  void emit(const std::string& name, const std::vector<Value>& a, int line) {
    if (name == "config_ex") {
      ConfigEx c;
      std::int64_t df = integer(a[0], line, "dataflow");
      if (df == 1) c.dataflow = Dataflow::WeightStationary;
      else if (df == 0) c.dataflow = Dataflow::OutputStationary;
      else syntax(line, fmt::format("invalid dataflow {}", df));
      std::int64_t act = integer(a[1], line, "activation");
      if (act < 0 || act > 4) syntax(line, fmt::format("invalid activation {}", act));
      c.act = static_cast<Activation>(act);
      c.a_transpose = integer(a[2], line, "A_transpose") != 0;
      c.b_transpose = integer(a[3], line, "B_transpose") != 0;
      push(c, line);
    } else if (name == "config_ld") {
      ConfigLd c;
      c.stride_bytes = non_negative(a[0], line, "stride");
      std::int64_t ch = integer(a[1], line, "id");
      if (ch < 0 || ch > 2) syntax(line, fmt::format("config_ld id must be 0, 1 or 2, got {}", ch));
      c.channel = static_cast<std::uint8_t>(ch);
      push(c, line);
    } else if (name == "config_st") {
      push(ConfigSt{non_negative(a[0], line, "stride")}, line);
    } else if (name == "mvin" || name == "mvin2" || name == "mvin3") {
      Mvin m;
      m.channel = name == "mvin" ? 0 : (name == "mvin2" ? 1 : 2);
      m.dram = dram(a[0], line);
      m.local = local(a[1], line);
      m.cols = positive(a[2], line, "cols");
      m.rows = positive(a[3], line, "rows");
      check_rows(m.rows, line);
      push(m, line);
    } else if (name == "preload") {
      Preload p;
      p.b = local(a[0], line);
      p.c = local(a[1], line);
      p.b_cols = positive(a[2], line, "B_cols");
      p.b_rows = positive(a[3], line, "B_rows");
      p.c_cols = positive(a[4], line, "C_cols");
      p.c_rows = positive(a[5], line, "C_rows");
      push(p, line);
    } else if (name == "preload_zeros") {
      push(PreloadZeros{local(a[0], line)}, line);
    } else if (name == "compute_preloaded" || name == "compute_accumulated") {
      Compute c;
      c.mode = name == "compute_preloaded" ? ComputeMode::Preloaded : ComputeMode::Accumulated;
      c.a = local(a[0], line);
      c.d = local(a[1], line);
      c.a_cols = positive(a[2], line, "A_cols");
      c.a_rows = positive(a[3], line, "A_rows");
      c.d_cols = positive(a[4], line, "bias_cols");
      c.d_rows = positive(a[5], line, "bias_rows");
      push(c, line);
    } else if (name == "mvout") {
      Mvout m;
      m.dram = dram(a[0], line);
      m.local = local(a[1], line);
      m.cols = positive(a[2], line, "cols");
      m.rows = positive(a[3], line, "rows");
      check_rows(m.rows, line);
      push(m, line);
    } else if (name == "fence") {
      push(Fence{}, line);
    }
  }

  // --- expressions ---------------------------------------------------------
  static std::int64_t shift_left(std::int64_t v, std::int64_t s, int line) {
    if (s < 0 || s > 62) syntax(line, fmt::format("shift amount {} out of range", s));
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(v) << s);
  }

  Value expr(bool exec) { return ternary(exec); }

  Value ternary(bool exec) {
    Value c = logical_or(exec);
    if (!accept("?")) return c;
    bool take = c.v != 0;
    Value a = ternary(exec && take);
    expect(":");
    Value b = ternary(exec && !take);
    return take ? a : b;
  }

  Value logical_or(bool exec) {
    Value l = logical_and(exec);
    while (is_punct("||")) {
      next();
      Value r = logical_and(exec);
      l = Value{(l.v != 0 || r.v != 0) ? 1 : 0, std::nullopt};
    }
    return l;
  }

  Value logical_and(bool exec) {
    Value l = bit_or(exec);
    while (is_punct("&&")) {
      next();
      Value r = bit_or(exec);
      l = Value{(l.v != 0 && r.v != 0) ? 1 : 0, std::nullopt};
    }
    return l;
  }

  Value bit_or(bool exec) {
    Value l = bit_xor(exec);
    while (is_punct("|")) {
      int line = next().line;
      Value r = bit_xor(exec);
      l = Value{ints(l, r, exec, line) ? (l.v | r.v) : 0, std::nullopt};
    }
    return l;
  }

  Value bit_xor(bool exec) {
    Value l = bit_and(exec);
    while (is_punct("^")) {
      int line = next().line;
      Value r = bit_and(exec);
      l = Value{ints(l, r, exec, line) ? (l.v ^ r.v) : 0, std::nullopt};
    }
    return l;
  }

  Value bit_and(bool exec) {
    Value l = equality(exec);
    while (is_punct("&")) {
      int line = next().line;
      Value r = equality(exec);
      l = Value{ints(l, r, exec, line) ? (l.v & r.v) : 0, std::nullopt};
    }
    return l;
  }

  Value equality(bool exec) {
    Value l = relational(exec);
    while (is_punct("==") || is_punct("!=")) {
      bool eq = next().text == "==";
      Value r = relational(exec);
      bool same = l.v == r.v && l.buffer == r.buffer;
      l = Value{(eq ? same : !same) ? 1 : 0, std::nullopt};
    }
    return l;
  }

  Value relational(bool exec) {
    Value l = shift(exec);
    while (is_punct("<") || is_punct("<=") || is_punct(">") || is_punct(">=")) {
      const Token& op = next();
      std::string o = op.text;
      Value r = shift(exec);
      bool ok = ints(l, r, exec, op.line);
      bool res = o == "<" ? l.v < r.v : o == "<=" ? l.v <= r.v : o == ">" ? l.v > r.v : l.v >= r.v;
      l = Value{ok && res ? 1 : 0, std::nullopt};
    }
    return l;
  }

  Value shift(bool exec) {
    Value l = additive(exec);
    while (is_punct("<<") || is_punct(">>")) {
      const Token& op = next();
      bool left = op.text == "<<";
      int line = op.line;
      Value r = additive(exec);
      if (!ints(l, r, exec, line)) {
        l = Value{};
        continue;
      }
      if (left) {
        l = Value{shift_left(l.v, r.v, line), std::nullopt};
      } else {
        l = Value{r.v >= 0 && r.v < 64 ? (l.v >> r.v) : 0, std::nullopt};
      }
    }
    return l;
  }

  Value additive(bool exec) {
    Value l = multiplicative(exec);
    while (is_punct("+") || is_punct("-")) {
      const Token& op = next();
      bool plus = op.text == "+";
      int line = op.line;
      Value r = multiplicative(exec);
      if (!exec) continue;
      if (l.buffer && r.buffer) {
        syntax(line, "cannot combine two DRAM pointers");
      } else if (r.buffer) {
        if (!plus) syntax(line, "cannot subtract a DRAM pointer");
        l = Value{l.v + r.v, r.buffer};
      } else {
        l = Value{plus ? l.v + r.v : l.v - r.v, l.buffer};
      }
    }
    return l;
  }

  Value multiplicative(bool exec) {
    Value l = unary(exec);
    while (is_punct("*") || is_punct("/") || is_punct("%")) {
      const Token& op = next();
      std::string o = op.text;
      int line = op.line;
      Value r = unary(exec);
      if (!ints(l, r, exec, line)) {
        l = Value{};
        continue;
      }
      if (o == "*") {
        l = Value{l.v * r.v, std::nullopt};
      } else {
        if (r.v == 0) syntax(line, "division by zero");
        l = Value{o == "/" ? l.v / r.v : l.v % r.v, std::nullopt};
      }
    }
    return l;
  }

  bool ints(const Value& l, const Value& r, bool exec, int line) const {
    if (!exec) return false;
    if (l.buffer || r.buffer) syntax(line, "DRAM pointers only support + and - with integers");
    return true;
  }

  bool is_cast() const {
    if (!is_punct("(")) return false;
    std::size_t i = 1;
    bool any = false;
    while (peek(i).kind == Tok::Ident && kTypeWords.count(peek(i).text)) {
      any = true;
      ++i;
    }
    while (is_punct("*", i)) ++i;
    return any && is_punct(")", i);
  }

  Value unary(bool exec) {
    const Token& t = peek();
    if (is_punct("-")) {
      next();
      Value v = unary(exec);
      if (exec && v.buffer) syntax(t.line, "cannot negate a DRAM pointer");
      return Value{-v.v, std::nullopt};
    }
    if (is_punct("+")) {
      next();
      return unary(exec);
    }
    if (is_punct("!")) {
      next();
      Value v = unary(exec);
      return Value{v.v == 0 && !v.buffer ? 1 : 0, std::nullopt};
    }
    if (is_punct("~")) {
      next();
      Value v = unary(exec);
      if (exec && v.buffer) syntax(t.line, "cannot complement a DRAM pointer");
      return Value{static_cast<std::int64_t>(static_cast<std::uint32_t>(~v.v)), std::nullopt};
    }
    if (is_punct("&")) {
      // &BUF[expr]
      next();
      int line = peek().line;
      std::string name = expect_ident();
      expect("[");
      Value idx = expr(exec);
      expect("]");
      if (!exec) return Value{};
      Value base = identifier(name, line);
      if (!base.buffer) syntax(line, fmt::format("'{}' is not a DRAM buffer", name));
      return Value{base.v + integer(idx, line, "index"), base.buffer};
    }
    if (is_cast()) {
      next();
      while (!is_punct(")")) next();
      next();
      return unary(exec);
    }
    return primary(exec);
  }

  Value identifier(const std::string& name, int line) {
    if (std::int64_t* v = lookup(name)) return Value{*v, std::nullopt};
    auto c = kBuiltinConstants.find(name);
    if (c != kBuiltinConstants.end()) return Value{c->second, std::nullopt};
    if (find_buffer(prog_.buffers, name)) return Value{0, name};
    if (opts_.allow_undeclared_buffers && !in_loop_header_) return Value{0, name};
    unbound(name, line);
  }

  Value primary(bool exec) {
    const Token& t = peek();
    if (t.kind == Tok::Int) {
      next();
      if (t.value > static_cast<std::uint64_t>(INT64_MAX)) syntax(t.line, "integer literal too large");
      return Value{static_cast<std::int64_t>(t.value), std::nullopt};
    }
    if (t.kind == Tok::Ident) {
      if (t.text == "sizeof") {
        next();
        expect("(");
        while (!is_punct(")")) {
          if (peek().kind == Tok::End) syntax(t.line, "unterminated sizeof");
          next();
        }
        next();
        return Value{4, std::nullopt};
      }
      next();
      if (is_punct("(")) {
        throw IsaError(IsaErrc::UnknownFunction, t.line,
                       fmt::format("function '{}' cannot be used in an expression", t.text));
      }
      if (!exec) return Value{};
      return identifier(t.text, t.line);
    }
    if (accept("(")) {
      Value v = expr(exec);
      expect(")");
      return v;
    }
    syntax(t.line, fmt::format("unexpected '{}' in expression",
                               t.kind == Tok::End ? "end of input" : t.text));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const ParseOptions& opts_;
  Program prog_;
  std::vector<std::unordered_map<std::string, std::pair<std::int64_t, IntType>>> scopes_;
  bool in_loop_header_ = false;
  std::size_t loop_iterations_ = 0;
  int loop_depth_ = 0;
  std::unordered_map<std::string, std::size_t> symbol_scope_;
};

}  // namespace

Program parse_program(std::string_view text, const BufferTable& buffers,
                      const ParseOptions& options) {
  Parser parser(lex(text), buffers, options);
  return parser.run();
}

}  // namespace talift::isa
