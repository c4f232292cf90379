// Stub kernel: a small interpreter for a Python-compatible subset.
//
// Statements: imports, `name = expr`, expression statements, `raise E("m")`,
// `pass`. Expressions: literals, names, calls with keyword arguments,
// indexing, list literals, f-strings, arithmetic and comparisons. Dotted
// calls `x.f(a)` on a bound name `x` mean `f(x, a)`.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "verbatim/csv.hpp"
#include "verbatim/error.hpp"
#include "verbatim/kernel.hpp"
#include "verbatim/plugin.hpp"
#include "verbatim/record_store.hpp"
#include "verbatim/sandbox_policy.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// --- values ------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct Value;
using List = std::vector<Value>;

struct Value {
  std::variant<std::monostate, bool, std::int64_t, double, std::string,
               std::shared_ptr<List>, std::shared_ptr<Table>>
      v;

  Value() = default;
  Value(bool b) : v(b) {}
  Value(std::int64_t i) : v(i) {}
  Value(int i) : v(static_cast<std::int64_t>(i)) {}
  Value(std::size_t i) : v(static_cast<std::int64_t>(i)) {}
  Value(double d) : v(d) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(List l) : v(std::make_shared<List>(std::move(l))) {}
  Value(Table t) : v(std::make_shared<Table>(std::move(t))) {}

  [[nodiscard]] bool is_none() const { return std::holds_alternative<std::monostate>(v); }
  template <typename T>
  [[nodiscard]] bool is() const {
    return std::holds_alternative<T>(v);
  }
  template <typename T>
  [[nodiscard]] const T& as() const {
    return std::get<T>(v);
  }
};

// --- control flow signals ----------------------------------------------------

struct ScriptError {
  std::string type;
  std::string message;
  [[nodiscard]] std::string text() const {
    return message.empty() ? type : type + ": " + message;
  }
};

struct SandboxViolation {
  std::string kind;
  std::string detail;
};

struct CellTimeout {};

// --- value helpers -----------------------------------------------------------

std::string type_name(const Value& v) {
  switch (v.v.index()) {
    case 0: return "NoneType";
    case 1: return "bool";
    case 2: return "int";
    case 3: return "float";
    case 4: return "str";
    case 5: return "list";
    default: return "DataFrame";
  }
}

std::string format_float(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "'";
}

std::string render_table(const Table& t) {
  constexpr std::size_t kMaxRows = 20;
  std::string out = text::join(t.columns, ",");
  for (std::size_t i = 0; i < t.rows.size() && i < kMaxRows; ++i) {
    std::vector<std::string> cells;
    for (const auto& c : t.rows[i]) cells.push_back(csv::escape(c));
    out += "\n" + text::join(cells, ",");
  }
  if (t.rows.size() > kMaxRows) {
    out += "\n... (" + std::to_string(t.rows.size()) + " rows)";
  }
  return out;
}

std::string repr(const Value& v);

std::string str(const Value& v) {
  if (v.is<std::string>()) return v.as<std::string>();
  return repr(v);
}

std::string repr(const Value& v) {
  switch (v.v.index()) {
    case 0: return "None";
    case 1: return v.as<bool>() ? "True" : "False";
    case 2: return std::to_string(v.as<std::int64_t>());
    case 3: return format_float(v.as<double>());
    case 4: return quote(v.as<std::string>());
    case 5: {
      std::vector<std::string> parts;
      for (const auto& e : *v.as<std::shared_ptr<List>>()) parts.push_back(repr(e));
      return "[" + text::join(parts, ", ") + "]";
    }
    default: return render_table(*v.as<std::shared_ptr<Table>>());
  }
}

bool truthy(const Value& v) {
  switch (v.v.index()) {
    case 0: return false;
    case 1: return v.as<bool>();
    case 2: return v.as<std::int64_t>() != 0;
    case 3: return v.as<double>() != 0.0;
    case 4: return !v.as<std::string>().empty();
    case 5: return !v.as<std::shared_ptr<List>>()->empty();
    default: return !v.as<std::shared_ptr<Table>>()->rows.empty();
  }
}

bool is_number(const Value& v) { return v.is<std::int64_t>() || v.is<double>() || v.is<bool>(); }

double as_double(const Value& v) {
  if (v.is<std::int64_t>()) return static_cast<double>(v.as<std::int64_t>());
  if (v.is<double>()) return v.as<double>();
  if (v.is<bool>()) return v.as<bool>() ? 1.0 : 0.0;
  throw ScriptError{"TypeError", "expected a number, got " + type_name(v)};
}

std::int64_t as_int(const Value& v) {
  if (v.is<std::int64_t>()) return v.as<std::int64_t>();
  if (v.is<bool>()) return v.as<bool>() ? 1 : 0;
  throw ScriptError{"TypeError", "expected an int, got " + type_name(v)};
}

const std::string& as_str(const Value& v) {
  if (!v.is<std::string>()) throw ScriptError{"TypeError", "expected a str, got " + type_name(v)};
  return v.as<std::string>();
}

const Table& as_table(const Value& v) {
  if (!v.is<std::shared_ptr<Table>>()) {
    throw ScriptError{"TypeError", "expected a DataFrame, got " + type_name(v)};
  }
  return *v.as<std::shared_ptr<Table>>();
}

const List& as_list(const Value& v) {
  if (!v.is<std::shared_ptr<List>>()) {
    throw ScriptError{"TypeError", "expected a list, got " + type_name(v)};
  }
  return *v.as<std::shared_ptr<List>>();
}

// --- lexer -------------------------------------------------------------------

enum class Tok { Name, Int, Float, Str, FStr, Op, Newline, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
};

struct ParseFailure {
  std::string message;
  int line;
};

std::vector<Token> lex(std::string_view src, int line_offset = 0) {
  std::vector<Token> out;
  std::size_t i = 0;
  int line = 1 + line_offset;
  int depth = 0;
  bool line_start = true;
  auto is_ident_start = [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < src.size()) {
    char c = src[i];
    if (line_start && depth == 0) {
      std::size_t j = i;
      while (j < src.size() && (src[j] == ' ' || src[j] == '\t')) ++j;
      const bool blank = j >= src.size() || src[j] == '\n' || src[j] == '#' || src[j] == '\r';
      if (j > i && !blank) throw ParseFailure{"unexpected indent", line};
      i = j;
      line_start = false;
      continue;
    }
    if (c == '\n') {
      if (depth == 0 && (out.empty() || out.back().kind != Tok::Newline)) {
        out.push_back({Tok::Newline, "", line});
      }
      ++line;
      ++i;
      line_start = true;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && src[i + 1] == '\n') {
      i += 2;
      ++line;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    bool fstring = false;
    if ((c == 'f' || c == 'F' || c == 'r' || c == 'R') && i + 1 < src.size() &&
        (src[i + 1] == '"' || src[i + 1] == '\'')) {
      fstring = c == 'f' || c == 'F';
      ++i;
      c = src[i];
    }
    if (c == '"' || c == '\'') {
      const char q = c;
      if (i + 2 < src.size() && src[i + 1] == q && src[i + 2] == q) {
        throw ParseFailure{"triple-quoted strings are not supported", line};
      }
      ++i;
      std::string s;
      bool closed = false;
      while (i < src.size()) {
        char d = src[i];
        if (d == '\n') break;
        if (d == '\\' && i + 1 < src.size()) {
          const char e = src[i + 1];
          switch (e) {
            case 'n': s += '\n'; break;
            case 't': s += '\t'; break;
            case '\\': s += '\\'; break;
            case '\'': s += '\''; break;
            case '"': s += '"'; break;
            default: s += '\\'; s += e; break;
          }
          i += 2;
          continue;
        }
        if (d == q) {
          closed = true;
          ++i;
          break;
        }
        s += d;
        ++i;
      }
      if (!closed) throw ParseFailure{"unterminated string literal", line};
      out.push_back({fstring ? Tok::FStr : Tok::Str, std::move(s), line});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.' ||
                                src[j] == '_')) {
        if (src[j] == '.') is_float = true;
        ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        is_float = true;
        ++j;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      std::string num(src.substr(i, j - i));
      num.erase(std::remove(num.begin(), num.end(), '_'), num.end());
      out.push_back({is_float ? Tok::Float : Tok::Int, num, line});
      i = j;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size()) {
        while (j < src.size() && is_ident(src[j])) ++j;
        if (j + 1 < src.size() && src[j] == '.' && is_ident_start(src[j + 1])) {
          ++j;
          continue;
        }
        break;
      }
      out.push_back({Tok::Name, std::string(src.substr(i, j - i)), line});
      i = j;
      continue;
    }
    static const std::array<std::string_view, 10> kTwo = {"==", "!=", "<=", ">=", "//",
                                                         "+=", "-=", "*=", "/=", "**"};
    if (i + 1 < src.size()) {
      const std::string_view two = src.substr(i, 2);
      if (std::find(kTwo.begin(), kTwo.end(), two) != kTwo.end()) {
        out.push_back({Tok::Op, std::string(two), line});
        i += 2;
        continue;
      }
    }
    if (std::string_view("()[]{},=<>+-*/%:.").find(c) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') {
        if (depth == 0) throw ParseFailure{"unmatched '" + std::string(1, c) + "'", line};
        --depth;
      }
      out.push_back({Tok::Op, std::string(1, c), line});
      ++i;
      continue;
    }
    throw ParseFailure{"invalid character '" + std::string(1, c) + "'", line};
  }
  if (depth != 0) throw ParseFailure{"unexpected EOF while parsing", line};
  if (out.empty() || out.back().kind != Tok::Newline) out.push_back({Tok::Newline, "", line});
  out.push_back({Tok::End, "", line});
  return out;
}

// --- syntax tree -------------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<Expr>;

struct Expr {
  enum class Kind { Const, Name, Call, Index, Binary, Unary, ListLit, FString } kind;
  int line = 0;
  Value constant;
  std::string name;  // Name / Call callee / operator
  std::vector<ExprPtr> args;
  std::vector<std::pair<std::string, ExprPtr>> kwargs;
  std::vector<std::variant<std::string, ExprPtr>> parts;  // f-string pieces
};

struct Stmt {
  enum class Kind { Import, Assign, AugAssign, Expression, Raise, Pass } kind;
  int line = 0;
  std::vector<std::string> modules;
  std::string target;
  std::string op;
  ExprPtr expr;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  std::vector<Stmt> program() {
    std::vector<Stmt> out;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        ++pos_;
        continue;
      }
      out.push_back(statement());
      if (peek().kind != Tok::Newline && peek().kind != Tok::End) fail("invalid syntax");
    }
    return out;
  }

  ExprPtr single_expression() {
    auto e = expression();
    while (peek().kind == Tok::Newline) ++pos_;
    if (peek().kind != Tok::End) fail("invalid syntax");
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_op(std::string_view op) const { return peek().kind == Tok::Op && peek().text == op; }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseFailure{msg, peek().line}; }
  void expect_op(std::string_view op) {
    if (!at_op(op)) fail("invalid syntax");
    ++pos_;
  }

  Stmt statement() {
    static const std::set<std::string> kUnsupported = {
        "def",   "class", "for",  "while", "if",   "elif",   "else",  "with",   "try",
        "except", "finally", "lambda", "return", "yield", "global", "nonlocal", "del",
        "assert", "async", "await", "break", "continue"};
    const Token& t = peek();
    Stmt s;
    s.line = t.line;
    if (t.kind == Tok::Name && kUnsupported.count(t.text) > 0) {
      fail("unsupported statement '" + t.text + "'");
    }
    if (t.kind == Tok::Name && t.text == "pass") {
      ++pos_;
      s.kind = Stmt::Kind::Pass;
      return s;
    }
    if (t.kind == Tok::Name && t.text == "import") {
      ++pos_;
      s.kind = Stmt::Kind::Import;
      while (true) {
        if (peek().kind != Tok::Name) fail("invalid syntax");
        s.modules.push_back(peek().text);
        ++pos_;
        if (peek().kind == Tok::Name && peek().text == "as") {
          pos_ += 2;
          if (toks_[pos_ - 1].kind != Tok::Name) fail("invalid syntax");
        }
        if (!at_op(",")) break;
        ++pos_;
      }
      return s;
    }
    if (t.kind == Tok::Name && t.text == "from") {
      ++pos_;
      s.kind = Stmt::Kind::Import;
      if (peek().kind != Tok::Name) fail("invalid syntax");
      const std::string module = peek().text;
      s.modules.push_back(module);
      ++pos_;
      if (!(peek().kind == Tok::Name && peek().text == "import")) fail("invalid syntax");
      ++pos_;
      // imported names are recorded as module.name for the call denylist
      bool after_as = false;
      while (peek().kind == Tok::Name || at_op(",") || at_op("*")) {
        if (peek().kind == Tok::Name && peek().text == "as") {
          after_as = true;
        } else if (peek().kind == Tok::Name && !after_as) {
          s.modules.push_back(module + "." + peek().text);
        } else {
          after_as = false;
        }
        ++pos_;
      }
      return s;
    }
    if (t.kind == Tok::Name && t.text == "raise") {
      ++pos_;
      s.kind = Stmt::Kind::Raise;
      s.expr = expression();
      return s;
    }
    if (t.kind == Tok::Name && t.text.find('.') == std::string::npos &&
        peek(1).kind == Tok::Op) {
      const std::string& op = peek(1).text;
      if (op == "=") {
        s.kind = Stmt::Kind::Assign;
        s.target = t.text;
        pos_ += 2;
        s.expr = expression();
        return s;
      }
      if (op == "+=" || op == "-=" || op == "*=" || op == "/=") {
        s.kind = Stmt::Kind::AugAssign;
        s.target = t.text;
        s.op = op.substr(0, 1);
        pos_ += 2;
        s.expr = expression();
        return s;
      }
    }
    s.kind = Stmt::Kind::Expression;
    s.expr = expression();
    if (at_op("=")) fail("cannot assign to expression");
    return s;
  }

  ExprPtr make(Expr::Kind kind, int line) {
    auto e = std::make_shared<Expr>();
    e->kind = kind;
    e->line = line;
    return e;
  }

  ExprPtr expression() { return comparison(); }

  ExprPtr comparison() {
    auto left = additive();
    while (at_op("==") || at_op("!=") || at_op("<") || at_op("<=") || at_op(">") || at_op(">=")) {
      auto e = make(Expr::Kind::Binary, peek().line);
      e->name = peek().text;
      ++pos_;
      e->args = {left, additive()};
      left = e;
    }
    return left;
  }

  ExprPtr additive() {
    auto left = multiplicative();
    while (at_op("+") || at_op("-")) {
      auto e = make(Expr::Kind::Binary, peek().line);
      e->name = peek().text;
      ++pos_;
      e->args = {left, multiplicative()};
      left = e;
    }
    return left;
  }

  ExprPtr multiplicative() {
    auto left = unary();
    while (at_op("*") || at_op("/") || at_op("//") || at_op("%")) {
      auto e = make(Expr::Kind::Binary, peek().line);
      e->name = peek().text;
      ++pos_;
      e->args = {left, unary()};
      left = e;
    }
    return left;
  }

  ExprPtr unary() {
    if (at_op("-") || at_op("+")) {
      auto e = make(Expr::Kind::Unary, peek().line);
      e->name = peek().text;
      ++pos_;
      e->args = {unary()};
      return e;
    }
    return postfix();
  }

  ExprPtr postfix() {
    auto e = primary();
    while (true) {
      if (at_op("(")) {
        if (e->kind != Expr::Kind::Name) fail("only named functions can be called");
        auto call = make(Expr::Kind::Call, e->line);
        call->name = e->name;
        ++pos_;
        while (!at_op(")")) {
          if (peek().kind == Tok::Name && peek(1).kind == Tok::Op && peek(1).text == "=") {
            std::string key = peek().text;
            pos_ += 2;
            call->kwargs.emplace_back(std::move(key), expression());
          } else {
            if (!call->kwargs.empty()) fail("positional argument follows keyword argument");
            call->args.push_back(expression());
          }
          if (at_op(",")) {
            ++pos_;
          } else if (!at_op(")")) {
            fail("invalid syntax");
          }
        }
        ++pos_;
        e = call;
      } else if (at_op("[")) {
        auto idx = make(Expr::Kind::Index, e->line);
        ++pos_;
        idx->args = {e, expression()};
        expect_op("]");
        e = idx;
      } else {
        return e;
      }
    }
  }

  ExprPtr primary() {
    const Token t = peek();
    switch (t.kind) {
      case Tok::Int: {
        ++pos_;
        auto e = make(Expr::Kind::Const, t.line);
        std::int64_t v = 0;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (res.ec != std::errc()) fail("integer literal out of range");
        e->constant = Value(v);
        return e;
      }
      case Tok::Float: {
        ++pos_;
        auto e = make(Expr::Kind::Const, t.line);
        e->constant = Value(std::stod(t.text));
        return e;
      }
      case Tok::Str: {
        ++pos_;
        auto e = make(Expr::Kind::Const, t.line);
        std::string s = t.text;
        while (peek().kind == Tok::Str) {  // implicit concatenation
          s += peek().text;
          ++pos_;
        }
        e->constant = Value(std::move(s));
        return e;
      }
      case Tok::FStr: {
        ++pos_;
        return fstring(t);
      }
      case Tok::Name: {
        ++pos_;
        if (t.text == "True" || t.text == "False") {
          auto e = make(Expr::Kind::Const, t.line);
          e->constant = Value(t.text == "True");
          return e;
        }
        if (t.text == "None") return make(Expr::Kind::Const, t.line);
        auto e = make(Expr::Kind::Name, t.line);
        e->name = t.text;
        return e;
      }
      case Tok::Op:
        if (t.text == "(") {
          ++pos_;
          auto e = expression();
          expect_op(")");
          return e;
        }
        if (t.text == "[") {
          ++pos_;
          auto e = make(Expr::Kind::ListLit, t.line);
          while (!at_op("]")) {
            e->args.push_back(expression());
            if (at_op(",")) {
              ++pos_;
            } else if (!at_op("]")) {
              fail("invalid syntax");
            }
          }
          ++pos_;
          return e;
        }
        break;
      default: break;
    }
    fail("invalid syntax");
  }

  ExprPtr fstring(const Token& t) {
    auto e = make(Expr::Kind::FString, t.line);
    const std::string& s = t.text;
    std::string literal;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '{' && i + 1 < s.size() && s[i + 1] == '{') {
        literal += '{';
        ++i;
      } else if (s[i] == '}' && i + 1 < s.size() && s[i + 1] == '}') {
        literal += '}';
        ++i;
      } else if (s[i] == '{') {
        const auto close = s.find('}', i);
        if (close == std::string::npos) fail("f-string: expecting '}'");
        if (!literal.empty()) e->parts.emplace_back(std::move(literal));
        literal.clear();
        Parser inner(lex(s.substr(i + 1, close - i - 1), t.line - 1));
        e->parts.emplace_back(inner.single_expression());
        i = close;
      } else if (s[i] == '}') {
        fail("f-string: single '}' is not allowed");
      } else {
        literal += s[i];
      }
    }
    if (!literal.empty()) e->parts.emplace_back(std::move(literal));
    return e;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::vector<Stmt> parse_program(std::string_view code) {
  Parser p(lex(code));
  return p.program();
}

// --- svg rendering for plugins ------------------------------------------------

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array<std::string_view, 10> kPalette = {
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fixed(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << v;
  return out.str();
}

}  // namespace

// --- session -----------------------------------------------------------------

struct StubKernelEngine::Session {
  KernelInit init;
  Table data;
  std::map<std::string, Value> vars;
  std::set<std::string> plugins;
  std::vector<Artifact> new_artifacts;
  std::string logs;
  std::chrono::steady_clock::time_point deadline;

  void bind_data() { vars["df"] = Value(data); }

  void check_deadline() const {
    if (std::chrono::steady_clock::now() > deadline) throw CellTimeout{};
  }

  std::size_t column(const Table& t, const std::string& name) const {
    for (const auto& candidate : {name, "label." + name, "meta." + name}) {
      auto it = std::find(t.columns.begin(), t.columns.end(), candidate);
      if (it != t.columns.end()) return static_cast<std::size_t>(it - t.columns.begin());
    }
    throw ScriptError{"KeyError", quote(name)};
  }

  static std::vector<std::string> cell_values(const Table& t, std::size_t col,
                                              const std::vector<std::string>& row) {
    if (t.columns[col] == "topics") {
      std::vector<std::string> out;
      for (const auto& part : text::split(row[col], ';')) {
        auto v = text::trim(part);
        if (!v.empty()) out.push_back(std::move(v));
      }
      return out;
    }
    return {row[col]};
  }

  fs::path resolve(const std::string& relative) const {
    const fs::path root = fs::weakly_canonical(init.workspace);
    fs::path p = fs::path(relative);
    if (p.is_relative()) p = root / p;
    p = fs::weakly_canonical(p);
    const auto rel = p.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") {
      throw SandboxViolation{"FilesystemEscape", "path '" + relative + "' is outside the workspace"};
    }
    return p;
  }

  std::string unique_name(const std::string& base, const std::string& ext) const {
    std::string name = base + ext;
    for (int i = 2; fs::exists(init.workspace / name); ++i) {
      name = base + "_" + std::to_string(i) + ext;
    }
    return name;
  }

  void write_artifact(const fs::path& path, const std::string& content, ArtifactKind kind,
                      std::string caption) {
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << content;
    }
    std::uintmax_t used = 0;
    for (const auto& entry : fs::recursive_directory_iterator(init.workspace)) {
      if (entry.is_regular_file()) used += entry.file_size();
    }
    if (used > init.workspace_quota) {
      fs::remove(path);
      throw SandboxViolation{"WorkspaceQuota", "workspace quota exceeded"};
    }
    const std::string rel = fs::relative(path, fs::weakly_canonical(init.workspace)).generic_string();
    new_artifacts.push_back({kind, rel, "", std::move(caption)});
  }

  // --- builtins --------------------------------------------------------------

  using Args = std::vector<Value>;

  static Args bind(const std::string& fn, const std::vector<std::string>& params,
                   std::size_t required, Args positional,
                   std::vector<std::pair<std::string, Value>> keywords,
                   const std::vector<Value>& defaults = {}) {
    if (positional.size() > params.size()) {
      throw ScriptError{"TypeError", fn + "() takes at most " + std::to_string(params.size()) +
                                         " arguments (" + std::to_string(positional.size()) +
                                         " given)"};
    }
    std::vector<std::optional<Value>> slots(params.size());
    for (std::size_t i = 0; i < positional.size(); ++i) slots[i] = std::move(positional[i]);
    for (auto& [key, value] : keywords) {
      auto it = std::find(params.begin(), params.end(), key);
      if (it == params.end()) {
        throw ScriptError{"TypeError",
                          fn + "() got an unexpected keyword argument " + quote(key)};
      }
      auto& slot = slots[static_cast<std::size_t>(it - params.begin())];
      if (slot) throw ScriptError{"TypeError", fn + "() got multiple values for " + quote(key)};
      slot = std::move(value);
    }
    Args out;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (slots[i]) {
        out.push_back(std::move(*slots[i]));
      } else if (i >= required && i - required < defaults.size()) {
        out.push_back(defaults[i - required]);
      } else {
        throw ScriptError{"TypeError",
                          fn + "() missing required argument " + quote(params[i])};
      }
    }
    return out;
  }

  Value call(const std::string& name, Args pos,
             std::vector<std::pair<std::string, Value>> kw) {
    if (name == "print") {
      std::vector<std::string> parts;
      for (const auto& v : pos) parts.push_back(str(v));
      logs += text::join(parts, " ") + "\n";
      return {};
    }
    if (name == "len") {
      auto a = bind(name, {"obj"}, 1, std::move(pos), std::move(kw));
      if (a[0].is<std::string>()) return Value(a[0].as<std::string>().size());
      if (a[0].is<std::shared_ptr<List>>()) return Value(as_list(a[0]).size());
      if (a[0].is<std::shared_ptr<Table>>()) return Value(as_table(a[0]).rows.size());
      throw ScriptError{"TypeError", "object of type " + quote(type_name(a[0])) + " has no len()"};
    }
    if (name == "str") {
      auto a = bind(name, {"obj"}, 1, std::move(pos), std::move(kw));
      return Value(str(a[0]));
    }
    if (name == "int") {
      auto a = bind(name, {"obj"}, 1, std::move(pos), std::move(kw));
      if (a[0].is<std::string>()) {
        std::int64_t v = 0;
        const std::string s = text::trim(a[0].as<std::string>());
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
          throw ScriptError{"ValueError", "invalid literal for int(): " + quote(s)};
        }
        return Value(v);
      }
      return Value(static_cast<std::int64_t>(std::trunc(as_double(a[0]))));
    }
    if (name == "float") {
      auto a = bind(name, {"obj"}, 1, std::move(pos), std::move(kw));
      if (a[0].is<std::string>()) {
        try {
          return Value(std::stod(a[0].as<std::string>()));
        } catch (const std::exception&) {
          throw ScriptError{"ValueError",
                            "could not convert string to float: " + quote(a[0].as<std::string>())};
        }
      }
      return Value(as_double(a[0]));
    }
    if (name == "round") {
      auto a = bind(name, {"number", "ndigits"}, 1, std::move(pos), std::move(kw), {Value()});
      if (a[1].is_none()) return Value(static_cast<std::int64_t>(std::nearbyint(as_double(a[0]))));
      const double scale = std::pow(10.0, static_cast<double>(as_int(a[1])));
      return Value(std::nearbyint(as_double(a[0]) * scale) / scale);
    }
    if (name == "sum" || name == "max" || name == "min") {
      auto a = bind(name, {"values"}, 1, std::move(pos), std::move(kw));
      const List& l = as_list(a[0]);
      if (name == "sum") {
        bool all_int = std::all_of(l.begin(), l.end(), [](const Value& v) {
          return v.is<std::int64_t>() || v.is<bool>();
        });
        if (all_int) {
          std::int64_t s = 0;
          for (const auto& v : l) s += as_int(v);
          return Value(s);
        }
        double s = 0.0;
        for (const auto& v : l) s += as_double(v);
        return Value(s);
      }
      if (l.empty()) throw ScriptError{"ValueError", name + "() arg is an empty sequence"};
      Value best = l.front();
      for (const auto& v : l) {
        const bool better = name == "max" ? compare(v, best) > 0 : compare(v, best) < 0;
        if (better) best = v;
      }
      return best;
    }
    if (name == "sorted") {
      auto a = bind(name, {"values", "reverse"}, 1, std::move(pos), std::move(kw), {Value(false)});
      List l = as_list(a[0]);
      std::stable_sort(l.begin(), l.end(),
                       [this](const Value& x, const Value& y) { return compare(x, y) < 0; });
      if (truthy(a[1])) std::reverse(l.begin(), l.end());
      return Value(std::move(l));
    }
    if (name == "sleep" || name == "time.sleep") {
      auto a = bind(name, {"seconds"}, 1, std::move(pos), std::move(kw));
      const auto wanted = std::chrono::duration<double>(as_double(a[0]));
      const auto until =
          std::chrono::steady_clock::now() +
          std::chrono::duration_cast<std::chrono::steady_clock::duration>(wanted);
      if (until > deadline) {
        std::this_thread::sleep_until(deadline);
        throw CellTimeout{};
      }
      std::this_thread::sleep_until(until);
      return {};
    }
    if (name == "open") {
      auto a = bind(name, {"file", "mode"}, 1, std::move(pos), std::move(kw), {Value("r")});
      const fs::path p = resolve(as_str(a[0]));
      const std::string& mode = as_str(a[1]);
      if (mode.find_first_of("wax") != std::string::npos) {
        std::ofstream(p, std::ios::app).flush();
        return Value(p.lexically_relative(fs::weakly_canonical(init.workspace)).generic_string());
      }
      std::ifstream in(p, std::ios::binary);
      if (!in) {
        throw ScriptError{"FileNotFoundError",
                          "[Errno 2] No such file or directory: " + quote(as_str(a[0]))};
      }
      std::ostringstream content;
      content << in.rdbuf();
      return Value(content.str());
    }
    if (name == "columns") {
      auto a = bind(name, {"table"}, 1, std::move(pos), std::move(kw));
      List l;
      for (const auto& c : as_table(a[0]).columns) l.emplace_back(c);
      return Value(std::move(l));
    }
    if (name == "head") {
      auto a = bind(name, {"table", "n"}, 1, std::move(pos), std::move(kw), {Value(5)});
      Table t = as_table(a[0]);
      const auto n = static_cast<std::size_t>(std::max<std::int64_t>(0, as_int(a[1])));
      if (t.rows.size() > n) t.rows.resize(n);
      return Value(std::move(t));
    }
    if (name == "value_counts") {
      auto a = bind(name, {"table", "column"}, 2, std::move(pos), std::move(kw));
      const Table& t = as_table(a[0]);
      const std::size_t col = column(t, as_str(a[1]));
      std::map<std::string, std::int64_t> counts;
      for (const auto& row : t.rows) {
        for (const auto& v : cell_values(t, col, row)) {
          if (!v.empty()) ++counts[v];
        }
      }
      std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& x, const auto& y) { return x.second > y.second; });
      Table out{{as_str(a[1]), "count"}, {}};
      for (const auto& [value, n] : ranked) out.rows.push_back({value, std::to_string(n)});
      return Value(std::move(out));
    }
    if (name == "filter_eq" || name == "filter_contains" || name == "filter_prefix") {
      auto a = bind(name, {"table", "column", "value"}, 3, std::move(pos), std::move(kw));
      const Table& t = as_table(a[0]);
      const std::size_t col = column(t, as_str(a[1]));
      const std::string want = str(a[2]);
      Table out{t.columns, {}};
      for (const auto& row : t.rows) {
        bool keep = false;
        if (name == "filter_eq") {
          const auto values = cell_values(t, col, row);
          keep = std::find(values.begin(), values.end(), want) != values.end();
        } else if (name == "filter_contains") {
          keep = text::contains(text::to_lower(row[col]), text::to_lower(want));
        } else {
          keep = text::starts_with(row[col], want);
        }
        if (keep) out.rows.push_back(row);
      }
      return Value(std::move(out));
    }
    if (name == "top_value") {
      auto a = bind(name, {"table"}, 1, std::move(pos), std::move(kw));
      const Table& t = as_table(a[0]);
      if (t.rows.empty() || t.columns.empty()) return {};
      return Value(t.rows.front().front());
    }
    if (name == "column_values") {
      auto a = bind(name, {"table", "column"}, 2, std::move(pos), std::move(kw));
      const Table& t = as_table(a[0]);
      const std::size_t col = column(t, as_str(a[1]));
      List l;
      for (const auto& row : t.rows) l.emplace_back(row[col]);
      return Value(std::move(l));
    }
    if (name == "save_table") {
      auto a = bind(name, {"table", "name", "caption"}, 2, std::move(pos), std::move(kw),
                    {Value("")});
      const Table& t = as_table(a[0]);
      const fs::path p = resolve(as_str(a[1]));
      std::string content = csv::format_row(t.columns);
      for (const auto& row : t.rows) content += csv::format_row(row);
      write_artifact(p, content, ArtifactKind::Table, str(a[2]));
      return Value(as_str(a[1]));
    }
    if (name == "save_text") {
      auto a = bind(name, {"content", "name", "caption"}, 2, std::move(pos), std::move(kw),
                    {Value("")});
      const fs::path p = resolve(as_str(a[1]));
      write_artifact(p, str(a[0]), ArtifactKind::File, str(a[2]));
      return Value(as_str(a[1]));
    }
    if (plugins.count(name) > 0) return call_plugin(name, std::move(pos), std::move(kw));
    throw ScriptError{"NameError", "name " + quote(name) + " is not defined"};
  }

  int compare(const Value& x, const Value& y) const {
    if (is_number(x) && is_number(y)) {
      const double a = as_double(x);
      const double b = as_double(y);
      return a < b ? -1 : (a > b ? 1 : 0);
    }
    if (x.is<std::string>() && y.is<std::string>()) {
      return x.as<std::string>().compare(y.as<std::string>()) < 0
                 ? -1
                 : (x.as<std::string>() == y.as<std::string>() ? 0 : 1);
    }
    throw ScriptError{"TypeError", "'<' not supported between instances of " +
                                       quote(type_name(x)) + " and " + quote(type_name(y))};
  }

  Value call_plugin(const std::string& name, Args pos,
                    std::vector<std::pair<std::string, Value>> kw) {
    const Table& t = data;
    if (name == "issue_river") {
      auto a = bind(name, {"topic_column", "time_column", "top_n"}, 0, std::move(pos),
                    std::move(kw), {Value("topics"), Value("timestamp"), Value(5)});
      const std::size_t tcol = column(t, as_str(a[0]));
      const std::size_t when = column(t, as_str(a[1]));
      const auto top_n = static_cast<std::size_t>(std::max<std::int64_t>(1, as_int(a[2])));
      std::map<std::string, std::int64_t> totals;
      std::map<std::string, std::map<std::string, std::int64_t>> by_month;
      for (const auto& row : t.rows) {
        const std::string month = row[when].substr(0, 7);
        for (const auto& topic : cell_values(t, tcol, row)) {
          if (topic == "others") continue;
          ++totals[topic];
          ++by_month[month][topic];
        }
      }
      std::vector<std::pair<std::string, std::int64_t>> ranked(totals.begin(), totals.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& x, const auto& y) { return x.second > y.second; });
      if (ranked.size() > top_n) ranked.resize(top_n);
      const std::string file = unique_name("issue_river", ".svg");
      write_artifact(resolve(file), river_svg(ranked, by_month), ArtifactKind::Image,
                     "Issue river of the top " + std::to_string(ranked.size()) + " topics");
      return Value(file);
    }
    auto a = bind(name, {"text_column"}, 0, std::move(pos), std::move(kw), {Value("text")});
    const std::size_t col = column(t, as_str(a[0]));
    std::map<std::string, std::int64_t> freq;
    for (const auto& row : t.rows) {
      for (const auto& tok : text::tokenize(row[col])) {
        if (!text::is_stopword(tok) && tok.size() > 2) ++freq[tok];
      }
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    if (ranked.size() > 40) ranked.resize(40);
    const std::string file = unique_name("word_cloud", ".svg");
    write_artifact(resolve(file), cloud_svg(ranked), ArtifactKind::Image,
                   "Word cloud of " + as_str(a[0]));
    return Value(file);
  }

  static std::string river_svg(
      const std::vector<std::pair<std::string, std::int64_t>>& topics,
      const std::map<std::string, std::map<std::string, std::int64_t>>& by_month) {
    constexpr double kW = 800, kH = 400, kLeft = 40, kBottom = 40, kLegend = 200;
    std::vector<std::string> months;
    for (const auto& [m, _] : by_month) months.push_back(m);
    std::int64_t peak = 1;
    for (const auto& m : months) {
      std::int64_t s = 0;
      for (const auto& [topic, _] : topics) {
        auto it = by_month.at(m).find(topic);
        if (it != by_month.at(m).end()) s += it->second;
      }
      peak = std::max(peak, s);
    }
    const double plot_w = kW - kLeft - kLegend;
    const double plot_h = kH - kBottom - 20;
    auto x_at = [&](std::size_t i) {
      return months.size() <= 1 ? kLeft + plot_w / 2
                                 : kLeft + plot_w * static_cast<double>(i) /
                                               static_cast<double>(months.size() - 1);
    };
    auto y_at = [&](double v) { return 20 + plot_h - plot_h * v / static_cast<double>(peak); };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::vector<double> base(months.size(), 0.0);
    for (std::size_t k = 0; k < topics.size(); ++k) {
      std::vector<double> top = base;
      for (std::size_t i = 0; i < months.size(); ++i) {
        auto it = by_month.at(months[i]).find(topics[k].first);
        if (it != by_month.at(months[i]).end()) top[i] += static_cast<double>(it->second);
      }
      svg << "<polygon fill=\"" << kPalette[k % kPalette.size()] << "\" fill-opacity=\"0.85\" points=\"";
      for (std::size_t i = 0; i < months.size(); ++i) {
        svg << fixed(x_at(i)) << "," << fixed(y_at(top[i])) << " ";
      }
      for (std::size_t i = months.size(); i-- > 0;) {
        svg << fixed(x_at(i)) << "," << fixed(y_at(base[i])) << (i == 0 ? "" : " ");
      }
      svg << "\"/>\n";
      const double ly = 30 + 22 * static_cast<double>(k);
      svg << "<rect x=\"" << fixed(kW - kLegend + 10) << "\" y=\"" << fixed(ly - 10)
          << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[k % kPalette.size()] << "\"/>\n";
      svg << "<text x=\"" << fixed(kW - kLegend + 28) << "\" y=\"" << fixed(ly)
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << xml_escape(topics[k].first)
          << " (" << topics[k].second << ")</text>\n";
      base = std::move(top);
    }
    for (std::size_t i = 0; i < months.size(); ++i) {
      svg << "<text x=\"" << fixed(x_at(i)) << "\" y=\"" << fixed(kH - 15)
          << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">"
          << xml_escape(months[i]) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
  }

  static std::string cloud_svg(const std::vector<std::pair<std::string, std::int64_t>>& words) {
    constexpr double kW = 800, kH = 400;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const double peak = words.empty() ? 1.0 : static_cast<double>(words.front().second);
    double x = 20, y = 60, row_h = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const double size = 12 + 36 * static_cast<double>(words[i].second) / peak;
      const double w = size * 0.6 * static_cast<double>(words[i].first.size());
      if (x + w > kW - 20) {
        x = 20;
        y += row_h + 10;
        row_h = 0;
      }
      if (y > kH - 10) break;
      svg << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" font-size=\"" << fixed(size)
          << "\" font-family=\"sans-serif\" fill=\"" << kPalette[i % kPalette.size()] << "\">"
          << xml_escape(words[i].first) << "</text>\n";
      x += w + 14;
      row_h = std::max(row_h, size);
    }
    svg << "</svg>\n";
    return svg.str();
  }

  // --- evaluation ------------------------------------------------------------

  Value eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Const: return e.constant;
      case Expr::Kind::Name: {
        auto it = vars.find(e.name);
        if (it != vars.end()) return it->second;
        throw ScriptError{"NameError", "name " + quote(e.name) + " is not defined"};
      }
      case Expr::Kind::ListLit: {
        List l;
        for (const auto& a : e.args) l.push_back(eval(*a));
        return Value(std::move(l));
      }
      case Expr::Kind::FString: {
        std::string out;
        for (const auto& part : e.parts) {
          if (std::holds_alternative<std::string>(part)) {
            out += std::get<std::string>(part);
          } else {
            out += str(eval(*std::get<ExprPtr>(part)));
          }
        }
        return Value(std::move(out));
      }
      case Expr::Kind::Unary: {
        Value v = eval(*e.args[0]);
        if (e.name == "+") return v;
        if (v.is<std::int64_t>()) return Value(-v.as<std::int64_t>());
        return Value(-as_double(v));
      }
      case Expr::Kind::Binary: return binary(e.name, eval(*e.args[0]), eval(*e.args[1]));
      case Expr::Kind::Index: return index(eval(*e.args[0]), eval(*e.args[1]));
      case Expr::Kind::Call: return eval_call(e);
    }
    return {};
  }

  Value eval_call(const Expr& e) {
    const std::string& name = e.name;
    if (is_process_call(name)) throw SandboxViolation{"ProcessAccess", "call to '" + name + "'"};
    if (is_network_module(name)) throw SandboxViolation{"NetworkAccess", "call to '" + name + "'"};
    if (is_process_module(name)) throw SandboxViolation{"ProcessAccess", "call to '" + name + "'"};
    Args pos;
    for (const auto& a : e.args) pos.push_back(eval(*a));
    std::vector<std::pair<std::string, Value>> kw;
    for (const auto& [k, a] : e.kwargs) kw.emplace_back(k, eval(*a));
    const auto dot = name.rfind('.');
    if (dot != std::string::npos && name != "time.sleep") {
      const std::string owner = name.substr(0, dot);
      auto it = vars.find(owner);
      if (it == vars.end()) {
        throw ScriptError{"NameError", "name " + quote(owner.substr(0, owner.find('.'))) +
                                           " is not defined"};
      }
      pos.insert(pos.begin(), it->second);
      return call(name.substr(dot + 1), std::move(pos), std::move(kw));
    }
    return call(name, std::move(pos), std::move(kw));
  }

  static Value binary(const std::string& op, const Value& a, const Value& b) {
    if (op == "==" || op == "!=") {
      bool eq = false;
      if (is_number(a) && is_number(b)) {
        eq = as_double(a) == as_double(b);
      } else if (a.v.index() == b.v.index()) {
        eq = repr(a) == repr(b);
      }
      return Value(op == "==" ? eq : !eq);
    }
    if (op == "<" || op == "<=" || op == ">" || op == ">=") {
      int c = 0;
      if (is_number(a) && is_number(b)) {
        c = as_double(a) < as_double(b) ? -1 : (as_double(a) > as_double(b) ? 1 : 0);
      } else if (a.is<std::string>() && b.is<std::string>()) {
        c = a.as<std::string>() < b.as<std::string>() ? -1
                                                       : (a.as<std::string>() == b.as<std::string>() ? 0 : 1);
      } else {
        throw ScriptError{"TypeError", quote(op) + " not supported between instances of " +
                                           quote(type_name(a)) + " and " + quote(type_name(b))};
      }
      if (op == "<") return Value(c < 0);
      if (op == "<=") return Value(c <= 0);
      if (op == ">") return Value(c > 0);
      return Value(c >= 0);
    }
    if (op == "+" && a.is<std::string>() && b.is<std::string>()) {
      return Value(a.as<std::string>() + b.as<std::string>());
    }
    if (op == "+" && a.is<std::shared_ptr<List>>() && b.is<std::shared_ptr<List>>()) {
      List l = as_list(a);
      const List& r = as_list(b);
      l.insert(l.end(), r.begin(), r.end());
      return Value(std::move(l));
    }
    if (!is_number(a) || !is_number(b)) {
      throw ScriptError{"TypeError", "unsupported operand type(s) for " + op + ": " +
                                         quote(type_name(a)) + " and " + quote(type_name(b))};
    }
    const bool ints = !a.is<double>() && !b.is<double>();
    if (op == "/") {
      if (as_double(b) == 0.0) throw ScriptError{"ZeroDivisionError", "division by zero"};
      return Value(as_double(a) / as_double(b));
    }
    if (ints) {
      const std::int64_t x = as_int(a);
      const std::int64_t y = as_int(b);
      if (op == "+") return Value(x + y);
      if (op == "-") return Value(x - y);
      if (op == "*") return Value(x * y);
      if (y == 0) throw ScriptError{"ZeroDivisionError", "integer division or modulo by zero"};
      std::int64_t q = x / y;
      if ((x % y != 0) && ((x < 0) != (y < 0))) --q;
      if (op == "//") return Value(q);
      return Value(x - q * y);
    }
    const double x = as_double(a);
    const double y = as_double(b);
    if (op == "+") return Value(x + y);
    if (op == "-") return Value(x - y);
    if (op == "*") return Value(x * y);
    if (y == 0.0) throw ScriptError{"ZeroDivisionError", "float division by zero"};
    if (op == "//") return Value(std::floor(x / y));
    return Value(x - std::floor(x / y) * y);
  }

  static Value index(const Value& container, const Value& key) {
    if (container.is<std::shared_ptr<Table>>()) {
      const Table& t = as_table(container);
      const std::string& col = as_str(key);
      auto it = std::find(t.columns.begin(), t.columns.end(), col);
      if (it == t.columns.end()) throw ScriptError{"KeyError", quote(col)};
      const auto c = static_cast<std::size_t>(it - t.columns.begin());
      List l;
      for (const auto& row : t.rows) l.emplace_back(row[c]);
      return Value(std::move(l));
    }
    std::int64_t i = as_int(key);
    if (container.is<std::string>()) {
      const std::string& s = container.as<std::string>();
      if (i < 0) i += static_cast<std::int64_t>(s.size());
      if (i < 0 || i >= static_cast<std::int64_t>(s.size())) {
        throw ScriptError{"IndexError", "string index out of range"};
      }
      return Value(std::string(1, s[static_cast<std::size_t>(i)]));
    }
    const List& l = as_list(container);
    if (i < 0) i += static_cast<std::int64_t>(l.size());
    if (i < 0 || i >= static_cast<std::int64_t>(l.size())) {
      throw ScriptError{"IndexError", "list index out of range"};
    }
    return l[static_cast<std::size_t>(i)];
  }

  ExecutionResult run(const std::string& code) {
    ExecutionResult result;
    logs.clear();
    new_artifacts.clear();
    deadline = std::chrono::steady_clock::now() + init.timeout;
    std::vector<Stmt> program;
    try {
      program = parse_program(code);
    } catch (const ParseFailure& f) {
      result.status = ExecStatus::Error;
      result.exception = "SyntaxError: " + f.message + " (line " + std::to_string(f.line) + ")";
      return result;
    }
    try {
      for (std::size_t i = 0; i < program.size(); ++i) {
        check_deadline();
        const Stmt& s = program[i];
        switch (s.kind) {
          case Stmt::Kind::Pass: break;
          case Stmt::Kind::Import:
            for (const auto& m : s.modules) {
              if (is_network_module(m)) throw SandboxViolation{"NetworkAccess", "import of '" + m + "'"};
              if (is_process_module(m) || is_process_call(m)) {
                throw SandboxViolation{"ProcessAccess", "import of '" + m + "'"};
              }
            }
            break;
          case Stmt::Kind::Assign: vars[s.target] = eval(*s.expr); break;
          case Stmt::Kind::AugAssign: {
            auto it = vars.find(s.target);
            if (it == vars.end()) {
              throw ScriptError{"NameError", "name " + quote(s.target) + " is not defined"};
            }
            it->second = binary(s.op, it->second, eval(*s.expr));
            break;
          }
          case Stmt::Kind::Raise: {
            const Expr& e = *s.expr;
            if (e.kind == Expr::Kind::Name) throw ScriptError{e.name, ""};
            if (e.kind == Expr::Kind::Call) {
              std::string msg;
              if (!e.args.empty()) msg = str(eval(*e.args.front()));
              throw ScriptError{e.name, msg};
            }
            throw ScriptError{"TypeError", "exceptions must derive from BaseException"};
          }
          case Stmt::Kind::Expression: {
            Value v = eval(*s.expr);
            if (i + 1 == program.size() && !v.is_none()) result.output = repr(v);
            break;
          }
        }
      }
      check_deadline();
    } catch (const ScriptError& e) {
      result.status = ExecStatus::Error;
      result.exception = e.text();
    } catch (const SandboxViolation& v) {
      result.status = ExecStatus::Violation;
      logs += "SandboxViolation: " + v.kind + ": " + v.detail + " denied\n";
    } catch (const CellTimeout&) {
      result.status = ExecStatus::Timeout;
      logs += "TimeoutError: cell exceeded " +
              format_float(std::chrono::duration<double>(init.timeout).count()) + " s\n";
    }
    result.logs = logs;
    result.artifacts = new_artifacts;
    return result;
  }
};

// --- engine ------------------------------------------------------------------

namespace {

json error_payload(Errc code, const std::string& message) {
  return {{"status", "error"}, {"error", to_string(code)}, {"message", message}};
}

Table load_table(const fs::path& snapshot) {
  std::ifstream in(snapshot, std::ios::binary);
  if (!in) throw Error(Errc::SnapshotMissing, "snapshot not found: " + snapshot.string());
  std::ostringstream content;
  content << in.rdbuf();
  std::string data = content.str();
  if (snapshot.extension() == ".jsonl") {
    RecordStore store;
    // label columns come from whatever dimensions the snapshot uses
    std::map<std::string, std::set<std::string>> dims;
    for (const auto& line : text::split(data, '\n')) {
      if (text::trim(line).empty()) continue;
      const json row = json::parse(line, nullptr, false);
      if (!row.is_object() || !row.contains("labels") || !row["labels"].is_object()) continue;
      for (const auto& [k, v] : row["labels"].items()) {
        if (v.is_string()) dims[k].insert(text::normalize_label(v.get<std::string>()));
      }
    }
    for (const auto& [name, labels] : dims) {
      store.declare_dimension({name, {labels.begin(), labels.end()}, {}});
    }
    store.ingest(data, RecordFormat::Jsonl);
    data = store.export_records({}, RecordFormat::Csv);
  }
  Table t;
  csv::Reader reader(data);
  try {
    if (auto header = reader.next()) t.columns = header->fields;
    while (auto row = reader.next()) {
      row->fields.resize(t.columns.size());
      t.rows.push_back(std::move(row->fields));
    }
  } catch (const std::runtime_error& e) {
    throw Error(Errc::SnapshotMissing, "unreadable snapshot: " + std::string(e.what()));
  }
  return t;
}

std::set<std::string> load_plugins(const std::optional<fs::path>& manifest) {
  std::set<std::string> out;
  if (!manifest) return out;
  for (const auto& p : load_plugin_manifest(*manifest)) {
    const bool known = (p.name == "issue_river" || p.name == "word_cloud") &&
                       p.module == "verbatim_plugins." + p.name;
    if (!known) {
      throw Error(Errc::PluginLoadError,
                  "plugin " + p.name + ": cannot import module '" + p.module + "'");
    }
    out.insert(p.name);
  }
  return out;
}

json list_workspace(const fs::path& workspace) {
  json arts = json::array();
  if (!fs::exists(workspace)) return arts;
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(workspace)) {
    if (entry.is_regular_file()) {
      files.push_back(fs::relative(entry.path(), workspace).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto ext = fs::path(f).extension().string();
    const ArtifactKind kind = ext == ".csv" ? ArtifactKind::Table
                              : (ext == ".svg" || ext == ".png") ? ArtifactKind::Image
                                                                 : ArtifactKind::File;
    arts.push_back({{"kind", to_string(kind)}, {"path", f}});
  }
  return arts;
}

}  // namespace

StubKernelEngine::StubKernelEngine() = default;
StubKernelEngine::~StubKernelEngine() = default;

KernelMessage StubKernelEngine::handle(const KernelMessage& request) {
  KernelMessage reply;
  reply.kind = MessageKind::Result;
  reply.session_id = request.session_id;
  reply.cell_id = request.cell_id;
  try {
    switch (request.kind) {
      case MessageKind::Init: {
        auto session = std::make_unique<Session>();
        session->init = KernelInit::from_json(request.payload);
        session->data = load_table(session->init.snapshot);
        session->plugins = load_plugins(session->init.manifest);
        fs::create_directories(session->init.workspace);
        session->bind_data();
        reply.payload = {{"status", "ready"}, {"rows", session->data.rows.size()}};
        sessions_[request.session_id] = std::move(session);
        finished_ = false;
        break;
      }
      case MessageKind::Execute: {
        auto it = sessions_.find(request.session_id);
        if (it == sessions_.end()) {
          throw Error(Errc::UnknownSession, "no session " + request.session_id);
        }
        if (!request.code || !request.cell_id) {
          throw Error(Errc::ProtocolError, "execute needs cell_id and code");
        }
        const bool parse_only = request.payload.is_object() &&
                                request.payload.value("parse_only", false);
        if (parse_only) {
          ExecutionResult r;
          if (auto err = stub_syntax_error(*request.code)) {
            r.status = ExecStatus::Error;
            r.exception = *err;
          }
          reply.payload = r.to_json();
        } else {
          reply.payload = it->second->run(*request.code).to_json();
        }
        break;
      }
      case MessageKind::Reset: {
        auto it = sessions_.find(request.session_id);
        if (it == sessions_.end()) {
          throw Error(Errc::UnknownSession, "no session " + request.session_id);
        }
        it->second->vars.clear();
        it->second->bind_data();
        reply.payload = {{"status", "ready"},
                         {"artifacts", list_workspace(it->second->init.workspace)}};
        break;
      }
      case MessageKind::Shutdown:
        sessions_.erase(request.session_id);
        finished_ = sessions_.empty();
        reply.payload = {{"status", "bye"}};
        break;
      case MessageKind::Result:
        throw Error(Errc::ProtocolError, "kernels do not accept result messages");
    }
  } catch (const Error& e) {
    reply.payload = error_payload(e.code(), e.detail());
  } catch (const std::exception& e) {
    reply.payload = error_payload(Errc::ProtocolError, e.what());
  }
  return reply;
}

std::optional<std::string> stub_syntax_error(std::string_view code) {
  try {
    parse_program(code);
  } catch (const ParseFailure& f) {
    return "SyntaxError: " + f.message + " (line " + std::to_string(f.line) + ")";
  }
  return std::nullopt;
}

}  // namespace verbatim
