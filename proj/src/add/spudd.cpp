#include "snap/spudd.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace snap::spudd {

using add::Add;
using add::Manager;
using add::NodeId;

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

std::string format_real(double v) {
  if (!std::isfinite(v)) throw add::AddError("cannot format a non-finite real");
  if (v == 0.0) v = 0.0;
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

void emit_node(const Manager& m, NodeId n, std::string& out) {
  if (m.is_leaf(n)) {
    out += '(';
    out += format_real(m.value(n));
    out += ')';
    return;
  }
  const auto& d = m.var(m.top(n));
  auto kids = m.children(n);
  out += '(';
  out += d.name;
  for (std::size_t k = 0; k < kids.size(); ++k) {
    out += " (";
    out += d.values[k];
    out += ' ';
    emit_node(m, kids[k], out);
    out += ')';
  }
  out += ')';
}

void emit_pretty_node(const Manager& m, NodeId n, std::size_t depth, std::string& out) {
  if (m.is_leaf(n)) {
    out += '(';
    out += format_real(m.value(n));
    out += ')';
    return;
  }
  const auto& d = m.var(m.top(n));
  auto kids = m.children(n);
  out += '(';
  out += d.name;
  for (std::size_t k = 0; k < kids.size(); ++k) {
    out += '\n';
    out.append(2 * (depth + 1), ' ');
    out += '(';
    out += d.values[k];
    out += ' ';
    emit_pretty_node(m, kids[k], depth + 1, out);
    out += ')';
  }
  out += ')';
}

}  // namespace

std::string emit_tree(const Add& a) {
  std::string out;
  emit_node(a.manager(), a.root(), out);
  return out;
}

std::string emit(const Add& a, std::string_view name) {
  std::string out = "dd ";
  out += name;
  out += ' ';
  emit_node(a.manager(), a.root(), out);
  out += " enddd";
  return out;
}

std::string emit_pretty(const Add& a, std::string_view name) {
  std::string out = "dd ";
  out += name;
  out += "\n  ";
  emit_pretty_node(a.manager(), a.root(), 1, out);
  out += "\nenddd\n";
  return out;
}

// ---------------------------------------------------------------------------

Lexer::Lexer(std::string_view text) : src_(text) {}

Lexer::Token Lexer::scan() {
  for (;;) {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
      while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      continue;
    }
    break;
  }
  Token t{Kind::end, {}, line_, col_};
  if (pos_ >= src_.size()) return t;
  char c = src_[pos_];
  if (c == '(' || c == ')') {
    t.kind = c == '(' ? Kind::lparen : Kind::rparen;
    t.text = src_.substr(pos_, 1);
    ++pos_;
    ++col_;
    return t;
  }
  std::size_t start = pos_;
  while (pos_ < src_.size()) {
    char d = src_[pos_];
    if (std::isspace(static_cast<unsigned char>(d)) || d == '(' || d == ')') break;
    ++pos_;
  }
  t.kind = Kind::word;
  t.text = src_.substr(start, pos_ - start);
  col_ += pos_ - start;
  return t;
}

const Lexer::Token& Lexer::peek() {
  if (!ahead_) ahead_ = scan();
  return *ahead_;
}

Lexer::Token Lexer::next() {
  Token t = peek();
  ahead_.reset();
  return t;
}

void Lexer::fail(const Token& at, const std::string& msg) const {
  throw ParseError(at.line, at.column, msg);
}

namespace {
std::string describe(const Lexer::Token& t) {
  switch (t.kind) {
    case Lexer::Kind::lparen: return "'('";
    case Lexer::Kind::rparen: return "')'";
    case Lexer::Kind::end: return "end of input";
    case Lexer::Kind::word: return "'" + std::string(t.text) + "'";
  }
  return "?";
}
}  // namespace

void Lexer::expect(Kind k) {
  Token t = next();
  if (t.kind != k) fail(t, std::string("expected ") + (k == Kind::lparen ? "'('" : k == Kind::rparen ? "')'" : "a word") +
                              ", found " + describe(t));
}

std::string_view Lexer::expect_word() {
  Token t = next();
  if (t.kind != Kind::word) fail(t, "expected a word, found " + describe(t));
  return t.text;
}

void Lexer::expect_keyword(std::string_view kw) {
  Token t = next();
  if (t.kind != Kind::word || t.text != kw)
    fail(t, "expected '" + std::string(kw) + "', found " + describe(t));
}

double Lexer::expect_real() {
  Token t = next();
  if (t.kind != Kind::word) fail(t, "expected a number, found " + describe(t));
  double v = 0.0;
  const char* b = t.text.data();
  const char* e = b + t.text.size();
  if (b != e && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e || !std::isfinite(v))
    fail(t, "malformed number " + describe(t));
  return v;
}

static bool looks_numeric(std::string_view s) {
  if (s.empty()) return false;
  char c = s[0];
  return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
}

Add Lexer::tree(const std::shared_ptr<Manager>& mgr) {
  expect(Kind::lparen);
  const Token head = next();
  if (head.kind != Kind::word) fail(head, "expected a number or variable, found " + describe(head));
  if (looks_numeric(head.text)) {
    ahead_ = head;
    double v = expect_real();
    expect(Kind::rparen);
    return Add::constant(mgr, v);
  }
  auto var = mgr->find(head.text);
  if (!var) fail(head, "unknown variable '" + std::string(head.text) + "'");
  const auto& decl = mgr->var(*var);
  std::vector<std::optional<Add>> kids(decl.values.size());
  while (peek().kind == Kind::lparen) {
    next();
    Token vt = next();
    if (vt.kind != Kind::word) fail(vt, "expected a value of '" + decl.name + "', found " + describe(vt));
    std::size_t k = 0;
    while (k < decl.values.size() && decl.values[k] != vt.text) ++k;
    if (k == decl.values.size())
      fail(vt, "unknown value '" + std::string(vt.text) + "' for variable '" + decl.name + "'");
    if (kids[k]) fail(vt, "value '" + std::string(vt.text) + "' repeated");
    kids[k] = tree(mgr);
    expect(Kind::rparen);
  }
  for (std::size_t k = 0; k < kids.size(); ++k)
    if (!kids[k]) fail(peek(), "missing branch '" + decl.values[k] + "' of variable '" + decl.name + "'");
  expect(Kind::rparen);

  bool ordered = true;
  std::vector<NodeId> ids;
  for (const auto& c : kids) {
    NodeId n = c->root();
    if (!mgr->is_leaf(n) && mgr->top(n) <= *var) ordered = false;
    ids.push_back(n);
  }
  if (ordered) return Add(mgr, mgr->node(*var, ids));
  // Out-of-order text: rebuild as a sum of guarded branches.
  Add acc = Add::constant(mgr, 0.0);
  for (std::size_t k = 0; k < kids.size(); ++k) acc = acc + Add::indicator(mgr, *var, k) * *kids[k];
  return acc;
}

NamedDd parse(std::string_view text, std::shared_ptr<Manager> mgr) {
  Lexer lx(text);
  auto all = parse_all(text, std::move(mgr));
  if (all.size() != 1) {
    const auto& t = lx.peek();
    throw ParseError(t.line, t.column, "expected exactly one dd block, found " + std::to_string(all.size()));
  }
  return std::move(all.front());
}

std::vector<NamedDd> parse_all(std::string_view text, std::shared_ptr<Manager> mgr) {
  Lexer lx(text);
  std::vector<NamedDd> out;
  while (!lx.at_end()) {
    lx.expect_keyword("dd");
    std::string name(lx.expect_word());
    Add a = lx.tree(mgr);
    lx.expect_keyword("enddd");
    out.push_back({std::move(name), std::move(a)});
  }
  return out;
}

}  // namespace snap::spudd
