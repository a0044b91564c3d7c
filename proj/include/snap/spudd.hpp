#pragma once

// SPUDD-style text for decision diagrams:
//
//   dd <name> <tree> enddd
//   <tree> ::= (<real>) | (<var> (<val> <tree>)+)

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snap/add.hpp"

namespace snap::spudd {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_, column_;
};

// Shortest text that reads back to the same double; always contains '.' or
// an exponent so it never looks like an identifier.
std::string format_real(double v);

std::string emit(const add::Add& a, std::string_view name);
std::string emit_pretty(const add::Add& a, std::string_view name);
// Tree only, compact form.
std::string emit_tree(const add::Add& a);

struct NamedDd {
  std::string name;
  add::Add dd;
};

// Variables must already be declared in mgr.
NamedDd parse(std::string_view text, std::shared_ptr<add::Manager> mgr);
std::vector<NamedDd> parse_all(std::string_view text, std::shared_ptr<add::Manager> mgr);

// Tokenizer shared with the model container format. `//` starts a comment
// running to end of line.
class Lexer {
 public:
  enum class Kind { lparen, rparen, word, end };
  struct Token {
    Kind kind;
    std::string_view text;
    std::size_t line, column;
  };

  explicit Lexer(std::string_view text);

  const Token& peek();
  Token next();
  bool at_end() { return peek().kind == Kind::end; }

  void expect(Kind k);
  std::string_view expect_word();
  void expect_keyword(std::string_view kw);
  double expect_real();
  [[noreturn]] void fail(const Token& at, const std::string& msg) const;

  // Parses one <tree>.
  add::Add tree(const std::shared_ptr<add::Manager>& mgr);

 private:
  Token scan();

  std::string_view src_;
  std::size_t pos_ = 0, line_ = 1, col_ = 1;
  std::optional<Token> ahead_;
};

}  // namespace snap::spudd
