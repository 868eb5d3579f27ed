#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nlplan::llm {

struct CharRange {
  char32_t lo;
  char32_t hi;
  friend bool operator==(const CharRange&, const CharRange&) = default;
};

/// One element of a GBNF right-hand side.
struct Element {
  enum class Kind { Literal, CharClass, Any, RuleRef, Group, Repeat };
  static constexpr unsigned kUnbounded = std::numeric_limits<unsigned>::max();

  Kind kind{Kind::Literal};
  std::u32string literal;                          // Literal
  std::vector<CharRange> ranges;                   // CharClass
  bool negated{false};                             // CharClass
  std::string name;                                // RuleRef
  std::vector<std::vector<Element>> alternatives;  // Group; Repeat holds one sequence with one element
  unsigned min{0};                                 // Repeat
  unsigned max{0};                                 // Repeat, kUnbounded for '*' and '+'

  friend bool operator==(const Element&, const Element&) = default;
};

using Sequence = std::vector<Element>;
using Alternatives = std::vector<Sequence>;

struct Rule {
  std::string name;
  Alternatives alternatives;
  friend bool operator==(const Rule&, const Rule&) = default;
};

/// BNF production set in declaration order plus the start rule.
struct GrammarSpec {
  std::vector<Rule> rules;
  std::string root{"root"};

  const Rule* find(std::string_view name) const;
  friend bool operator==(const GrammarSpec&, const GrammarSpec&) = default;
};

class GrammarError : public std::runtime_error {
 public:
  GrammarError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Parses llama.cpp-style GBNF text: `name ::= alt | alt`, string literals,
/// character classes, `.`, grouping, `*` `+` `?` `{m}` `{m,}` `{m,n}`, and
/// `#` comments.
GrammarSpec parse_gbnf(std::string_view text, std::string root = "root");

/// GBNF text that parses back to an equal GrammarSpec.
std::string to_gbnf(const GrammarSpec& spec);

/// Structural defects: missing root, undefined references, and rules (root
/// included) that cannot derive any finite string. Empty when the spec is
/// usable.
std::vector<std::string> validate(const GrammarSpec& spec);

/// Strict UTF-8 decode; nullopt on malformed input, overlongs, surrogates or
/// code points past U+10FFFF.
std::optional<std::u32string> decode_utf8(std::string_view bytes);

/// A validated grammar compiled for recognition with an Earley parser.
/// Immutable after construction and safe to share across threads.
class Grammar {
 public:
  explicit Grammar(GrammarSpec spec);

  static std::shared_ptr<const Grammar> from_gbnf(std::string_view text, std::string root = "root");
  /// JSON grammar shipped with the library (object at the top level).
  static std::shared_ptr<const Grammar> json();

  const GrammarSpec& spec() const { return spec_; }
  std::string to_gbnf() const { return llm::to_gbnf(spec_); }

  /// True iff `text` (UTF-8) is derivable from the root rule.
  bool recognize(std::string_view text) const;
  bool recognize(const std::u32string& codepoints) const;

  struct Compiled;

 private:
  GrammarSpec spec_;
  std::shared_ptr<const Compiled> compiled_;
};

/// Source text of the shipped JSON grammar.
std::string_view json_gbnf();

}  // namespace nlplan::llm
