#include "nlplan/grammar.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "nlplan_embedded.hpp"

namespace nlplan::llm {

const Rule* GrammarSpec::find(std::string_view name) const {
  for (const auto& r : rules) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::string_view json_gbnf() { return embedded::kJsonGbnf; }

// ---------------------------------------------------------------------------
// UTF-8

std::optional<std::u32string> decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const auto n = bytes.size();
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(bytes[k]); };
  auto cont = [&](std::size_t k) { return k < n && (at(k) & 0xC0) == 0x80; };
  while (i < n) {
    const unsigned char b = at(i);
    if (b < 0x80) {
      out.push_back(b);
      ++i;
    } else if (b >= 0xC2 && b <= 0xDF) {
      if (!cont(i + 1)) return std::nullopt;
      out.push_back(((b & 0x1F) << 6) | (at(i + 1) & 0x3F));
      i += 2;
    } else if (b >= 0xE0 && b <= 0xEF) {
      if (!cont(i + 1) || !cont(i + 2)) return std::nullopt;
      const char32_t cp = ((b & 0x0F) << 12) | ((at(i + 1) & 0x3F) << 6) | (at(i + 2) & 0x3F);
      if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
      out.push_back(cp);
      i += 3;
    } else if (b >= 0xF0 && b <= 0xF4) {
      if (!cont(i + 1) || !cont(i + 2) || !cont(i + 3)) return std::nullopt;
      const char32_t cp =
          ((b & 0x07) << 18) | ((at(i + 1) & 0x3F) << 12) | ((at(i + 2) & 0x3F) << 6) | (at(i + 3) & 0x3F);
      if (cp < 0x10000 || cp > 0x10FFFF) return std::nullopt;
      out.push_back(cp);
      i += 4;
    } else {
      return std::nullopt;
    }
  }
  return out;
}

namespace {

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// ---------------------------------------------------------------------------
// GBNF parser

bool is_word_char(char32_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

int hex_value(char32_t c) {
  if (c >= '0' && c <= '9') return static_cast<int>(c - '0');
  if (c >= 'a' && c <= 'f') return static_cast<int>(c - 'a' + 10);
  if (c >= 'A' && c <= 'F') return static_cast<int>(c - 'A' + 10);
  return -1;
}

class GbnfParser {
 public:
  explicit GbnfParser(std::u32string src) : src_(std::move(src)) {}

  std::vector<Rule> parse() {
    std::vector<Rule> rules;
    skip_space(true);
    while (!eof()) {
      const auto line = line_, col = col_;
      auto name = parse_name();
      if (name.empty()) fail("expected rule name");
      skip_space(true);
      if (!consume(U"::=")) fail("expected '::=' after rule name '" + name + "'");
      Rule rule{std::move(name), parse_alternatives(false)};
      for (const auto& existing : rules) {
        if (existing.name == rule.name) {
          throw GrammarError("rule '" + rule.name + "' defined twice", line, col);
        }
      }
      rules.push_back(std::move(rule));
      skip_space(true);
    }
    return rules;
  }

 private:
  bool eof() const { return pos_ >= src_.size(); }
  char32_t peek(std::size_t ahead = 0) const { return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : 0; }

  char32_t advance() {
    const char32_t c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  bool consume(std::u32string_view token) {
    if (src_.compare(pos_, token.size(), token) != 0) return false;
    for (std::size_t i = 0; i < token.size(); ++i) advance();
    return true;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw GrammarError("gbnf " + std::to_string(line_) + ":" + std::to_string(col_) + ": " + why, line_, col_);
  }

  void skip_space(bool newlines) {
    while (!eof()) {
      const char32_t c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        advance();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string parse_name() {
    std::string name;
    while (!eof() && is_word_char(peek())) name.push_back(static_cast<char>(advance()));
    return name;
  }

  // True when the upcoming text is `name ::=`, i.e. the current rule ended.
  bool at_rule_start() const {
    std::size_t p = pos_;
    if (p >= src_.size() || !is_word_char(src_[p])) return false;
    while (p < src_.size() && is_word_char(src_[p])) ++p;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\r' || src_[p] == '\n')) ++p;
    return src_.compare(p, 3, U"::=") == 0;
  }

  Alternatives parse_alternatives(bool nested) {
    Alternatives alts;
    alts.push_back(parse_sequence(nested));
    while (true) {
      skip_space(true);
      if (peek() != '|') break;
      advance();
      alts.push_back(parse_sequence(nested));
    }
    return alts;
  }

  Sequence parse_sequence(bool nested) {
    Sequence seq;
    while (true) {
      skip_space(true);
      if (eof()) break;
      const char32_t c = peek();
      if (c == '|' || c == ')') break;
      if (!nested && at_rule_start()) break;
      auto element = parse_primary();
      parse_postfix(element);
      seq.push_back(std::move(element));
    }
    return seq;
  }

  char32_t parse_escape() {
    if (eof()) fail("unterminated escape");
    const char32_t c = advance();
    auto hex_digits = [&](int count) {
      char32_t v = 0;
      for (int i = 0; i < count; ++i) {
        const int h = eof() ? -1 : hex_value(peek());
        if (h < 0) fail("bad hex escape");
        advance();
        v = (v << 4) | static_cast<char32_t>(h);
      }
      return v;
    };
    switch (c) {
      case 'n': return '\n';
      case 'r': return '\r';
      case 't': return '\t';
      case 'x': return hex_digits(2);
      case 'u': return hex_digits(4);
      case 'U': return hex_digits(8);
      default: return c;
    }
  }

  Element parse_primary() {
    Element e;
    const char32_t c = peek();
    if (c == '"') {
      advance();
      e.kind = Element::Kind::Literal;
      while (true) {
        if (eof() || peek() == '\n') fail("unterminated string literal");
        char32_t ch = advance();
        if (ch == '"') break;
        if (ch == '\\') ch = parse_escape();
        e.literal.push_back(ch);
      }
    } else if (c == '[') {
      advance();
      e.kind = Element::Kind::CharClass;
      if (peek() == '^') {
        advance();
        e.negated = true;
      }
      while (true) {
        if (eof() || peek() == '\n') fail("unterminated character class");
        char32_t lo = advance();
        if (lo == ']') break;
        if (lo == '\\') lo = parse_escape();
        char32_t hi = lo;
        if (peek() == '-' && peek(1) != ']' && peek(1) != 0) {
          advance();
          hi = advance();
          if (hi == '\\') hi = parse_escape();
          if (hi < lo) fail("inverted character range");
        }
        e.ranges.push_back({lo, hi});
      }
    } else if (c == '.') {
      advance();
      e.kind = Element::Kind::Any;
    } else if (c == '(') {
      advance();
      e.kind = Element::Kind::Group;
      e.alternatives = parse_alternatives(true);
      skip_space(true);
      if (peek() != ')') fail("expected ')'");
      advance();
    } else if (is_word_char(c)) {
      e.kind = Element::Kind::RuleRef;
      e.name = parse_name();
    } else {
      std::string shown;
      append_utf8(shown, c);
      fail("unexpected character '" + shown + "'");
    }
    return e;
  }

  unsigned parse_uint() {
    if (eof() || peek() < '0' || peek() > '9') fail("expected number in repetition");
    unsigned v = 0;
    while (!eof() && peek() >= '0' && peek() <= '9') v = v * 10 + static_cast<unsigned>(advance() - '0');
    return v;
  }

  void parse_postfix(Element& element) {
    while (!eof()) {
      const char32_t c = peek();
      unsigned min = 0, max = 0;
      if (c == '*') {
        advance();
        min = 0;
        max = Element::kUnbounded;
      } else if (c == '+') {
        advance();
        min = 1;
        max = Element::kUnbounded;
      } else if (c == '?') {
        advance();
        min = 0;
        max = 1;
      } else if (c == '{') {
        advance();
        skip_space(false);
        min = parse_uint();
        skip_space(false);
        max = min;
        if (peek() == ',') {
          advance();
          skip_space(false);
          max = (peek() == '}') ? Element::kUnbounded : parse_uint();
          skip_space(false);
        }
        if (peek() != '}') fail("expected '}'");
        advance();
        if (max < min) fail("repetition max below min");
      } else {
        break;
      }
      Element rep;
      rep.kind = Element::Kind::Repeat;
      rep.min = min;
      rep.max = max;
      rep.alternatives = {Sequence{std::move(element)}};
      element = std::move(rep);
    }
  }

  std::u32string src_;
  std::size_t pos_{0};
  std::size_t line_{1};
  std::size_t col_{1};
};

// ---------------------------------------------------------------------------
// Printer

void print_char(std::string& out, char32_t c, std::u32string_view specials) {
  if (c == '\n') {
    out += "\\n";
  } else if (c == '\r') {
    out += "\\r";
  } else if (c == '\t') {
    out += "\\t";
  } else if (c < 0x20 || c == 0x7F) {
    static const char* digits = "0123456789ABCDEF";
    out += "\\x";
    out.push_back(digits[(c >> 4) & 0xF]);
    out.push_back(digits[c & 0xF]);
  } else if (specials.find(c) != std::u32string_view::npos) {
    out.push_back('\\');
    out.push_back(static_cast<char>(c));
  } else {
    append_utf8(out, c);
  }
}

void print_alternatives(std::string& out, const Alternatives& alts);

void print_element(std::string& out, const Element& e) {
  switch (e.kind) {
    case Element::Kind::Literal:
      out.push_back('"');
      for (char32_t c : e.literal) print_char(out, c, U"\"\\");
      out.push_back('"');
      break;
    case Element::Kind::CharClass:
      out.push_back('[');
      if (e.negated) out.push_back('^');
      for (std::size_t i = 0; i < e.ranges.size(); ++i) {
        const auto& r = e.ranges[i];
        // A leading '^' would read as negation.
        const std::u32string_view specials = (i == 0 && !e.negated) ? U"]\\-^" : U"]\\-";
        print_char(out, r.lo, specials);
        if (r.hi != r.lo) {
          out.push_back('-');
          print_char(out, r.hi, U"]\\-");
        }
      }
      out.push_back(']');
      break;
    case Element::Kind::Any:
      out.push_back('.');
      break;
    case Element::Kind::RuleRef:
      out += e.name;
      break;
    case Element::Kind::Group:
      out.push_back('(');
      print_alternatives(out, e.alternatives);
      out.push_back(')');
      break;
    case Element::Kind::Repeat: {
      print_element(out, e.alternatives.at(0).at(0));
      if (e.min == 0 && e.max == Element::kUnbounded) {
        out.push_back('*');
      } else if (e.min == 1 && e.max == Element::kUnbounded) {
        out.push_back('+');
      } else if (e.min == 0 && e.max == 1) {
        out.push_back('?');
      } else if (e.max == e.min) {
        out += "{" + std::to_string(e.min) + "}";
      } else if (e.max == Element::kUnbounded) {
        out += "{" + std::to_string(e.min) + ",}";
      } else {
        out += "{" + std::to_string(e.min) + "," + std::to_string(e.max) + "}";
      }
      break;
    }
  }
}

void print_alternatives(std::string& out, const Alternatives& alts) {
  for (std::size_t a = 0; a < alts.size(); ++a) {
    if (a != 0) out += " |";
    for (const auto& e : alts[a]) {
      out.push_back(' ');
      print_element(out, e);
    }
  }
  if (!alts.empty()) out.push_back(' ');
}

void collect_refs(const Alternatives& alts, std::vector<std::string>& out) {
  for (const auto& seq : alts) {
    for (const auto& e : seq) {
      if (e.kind == Element::Kind::RuleRef) out.push_back(e.name);
      if (e.kind == Element::Kind::Group || e.kind == Element::Kind::Repeat) collect_refs(e.alternatives, out);
    }
  }
}

}  // namespace

GrammarSpec parse_gbnf(std::string_view text, std::string root) {
  auto decoded = decode_utf8(text);
  if (!decoded) throw GrammarError("gbnf source is not valid UTF-8", 0, 0);
  GrammarSpec spec{GbnfParser(std::move(*decoded)).parse(), std::move(root)};
  return spec;
}

std::string to_gbnf(const GrammarSpec& spec) {
  std::string out;
  for (const auto& rule : spec.rules) {
    out += rule.name;
    out += " ::=";
    print_alternatives(out, rule.alternatives);
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compilation to a plain CFG

struct Grammar::Compiled {
  struct CharSet {
    std::vector<CharRange> ranges;
    bool negated{false};

    bool matches(char32_t c) const {
      bool in = false;
      for (const auto& r : ranges) {
        if (c >= r.lo && c <= r.hi) {
          in = true;
          break;
        }
      }
      return in != negated;
    }
  };

  struct Production {
    int lhs;
    std::vector<int> rhs;  // >= 0 nonterminal, < 0 terminal -(t+1)
  };

  std::vector<CharSet> terminals;
  std::vector<Production> productions;
  std::vector<std::vector<int>> by_lhs;
  std::vector<bool> nullable;
  std::vector<bool> productive;
  int start{0};
  int start_production{0};
};

namespace {

class Compiler {
 public:
  using C = Grammar::Compiled;

  explicit Compiler(const GrammarSpec& spec) : spec_(spec) {
    for (const auto& r : spec.rules) named_.emplace(r.name, new_nonterminal());
  }

  std::shared_ptr<C> run() {
    for (const auto& r : spec_.rules) add_alternatives(named_.at(r.name), r.alternatives);
    out_->start = new_nonterminal();
    out_->start_production = static_cast<int>(out_->productions.size());
    add_production(out_->start, {named_.at(spec_.root)});
    finish();
    return out_;
  }

 private:
  int new_nonterminal() {
    out_->by_lhs.emplace_back();
    return static_cast<int>(out_->by_lhs.size()) - 1;
  }

  void add_production(int lhs, std::vector<int> rhs) {
    out_->by_lhs[static_cast<std::size_t>(lhs)].push_back(static_cast<int>(out_->productions.size()));
    out_->productions.push_back({lhs, std::move(rhs)});
  }

  int terminal(std::vector<CharRange> ranges, bool negated) {
    std::sort(ranges.begin(), ranges.end(), [](const CharRange& a, const CharRange& b) {
      return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
    });
    std::string key = negated ? "^" : "";
    for (const auto& r : ranges) key += std::to_string(r.lo) + "-" + std::to_string(r.hi) + ",";
    auto [it, inserted] = terminal_ids_.emplace(key, static_cast<int>(out_->terminals.size()));
    if (inserted) out_->terminals.push_back({std::move(ranges), negated});
    return -(it->second + 1);
  }

  void add_alternatives(int lhs, const Alternatives& alts) {
    for (const auto& seq : alts) {
      std::vector<int> rhs;
      for (const auto& e : seq) append_element(rhs, e);
      add_production(lhs, std::move(rhs));
    }
  }

  int element_symbol(const Element& e) {
    std::vector<int> rhs;
    append_element(rhs, e);
    if (rhs.size() == 1) return rhs[0];
    const int nt = new_nonterminal();
    add_production(nt, std::move(rhs));
    return nt;
  }

  void append_element(std::vector<int>& rhs, const Element& e) {
    switch (e.kind) {
      case Element::Kind::Literal:
        for (char32_t c : e.literal) rhs.push_back(terminal({{c, c}}, false));
        break;
      case Element::Kind::CharClass:
        rhs.push_back(terminal(e.ranges, e.negated));
        break;
      case Element::Kind::Any:
        rhs.push_back(terminal({}, true));
        break;
      case Element::Kind::RuleRef:
        rhs.push_back(named_.at(e.name));
        break;
      case Element::Kind::Group: {
        const int nt = new_nonterminal();
        add_alternatives(nt, e.alternatives);
        rhs.push_back(nt);
        break;
      }
      case Element::Kind::Repeat: {
        const int item = element_symbol(e.alternatives.at(0).at(0));
        for (unsigned i = 0; i < e.min; ++i) rhs.push_back(item);
        if (e.max == Element::kUnbounded) {
          // star ::= <empty> | star item   (left recursion keeps Earley linear)
          const int star = new_nonterminal();
          add_production(star, {});
          add_production(star, {star, item});
          rhs.push_back(star);
        } else if (e.max > e.min) {
          // opt_k ::= <empty> | item opt_{k-1}
          int tail = -1;
          for (unsigned k = 0; k < e.max - e.min; ++k) {
            const int opt = new_nonterminal();
            add_production(opt, {});
            add_production(opt, tail < 0 ? std::vector<int>{item} : std::vector<int>{item, tail});
            tail = opt;
          }
          rhs.push_back(tail);
        }
        break;
      }
    }
  }

  void finish() {
    const auto n = out_->by_lhs.size();
    out_->nullable.assign(n, false);
    out_->productive.assign(n, false);
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& p : out_->productions) {
        const auto lhs = static_cast<std::size_t>(p.lhs);
        if (!out_->nullable[lhs] &&
            std::all_of(p.rhs.begin(), p.rhs.end(), [&](int s) { return s >= 0 && out_->nullable[s]; })) {
          out_->nullable[lhs] = true;
          changed = true;
        }
        if (!out_->productive[lhs] &&
            std::all_of(p.rhs.begin(), p.rhs.end(), [&](int s) { return s < 0 || out_->productive[s]; })) {
          out_->productive[lhs] = true;
          changed = true;
        }
      }
    }
  }

  const GrammarSpec& spec_;
  std::shared_ptr<C> out_ = std::make_shared<C>();
  std::map<std::string, int> named_;
  std::map<std::string, int> terminal_ids_;
};

}  // namespace

std::vector<std::string> validate(const GrammarSpec& spec) {
  std::vector<std::string> defects;
  std::set<std::string> names;
  for (const auto& r : spec.rules) {
    if (!names.insert(r.name).second) defects.push_back("rule '" + r.name + "' defined twice");
  }
  if (!names.count(spec.root)) defects.push_back("root rule '" + spec.root + "' is not defined");
  for (const auto& r : spec.rules) {
    std::vector<std::string> refs;
    collect_refs(r.alternatives, refs);
    for (const auto& ref : refs) {
      if (!names.count(ref)) defects.push_back("rule '" + r.name + "' references undefined rule '" + ref + "'");
    }
  }
  if (!defects.empty()) return defects;

  const auto compiled = Compiler(spec).run();
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    if (!compiled->productive[i]) {
      defects.push_back("rule '" + spec.rules[i].name + "' cannot derive any finite string");
    }
  }
  return defects;
}

Grammar::Grammar(GrammarSpec spec) : spec_(std::move(spec)) {
  const auto defects = validate(spec_);
  if (!defects.empty()) {
    std::string msg = "invalid grammar:";
    for (const auto& d : defects) msg += "\n  " + d;
    throw GrammarError(msg, 0, 0);
  }
  compiled_ = Compiler(spec_).run();
}

std::shared_ptr<const Grammar> Grammar::from_gbnf(std::string_view text, std::string root) {
  return std::make_shared<const Grammar>(parse_gbnf(text, std::move(root)));
}

std::shared_ptr<const Grammar> Grammar::json() {
  static const auto shared = from_gbnf(json_gbnf());
  return shared;
}

bool Grammar::recognize(std::string_view text) const {
  auto decoded = decode_utf8(text);
  return decoded && recognize(*decoded);
}

// ---------------------------------------------------------------------------
// Earley recognizer with the Aycock-Horspool nullable completion.

bool Grammar::recognize(const std::u32string& input) const {
  const auto& g = *compiled_;
  struct Item {
    std::uint32_t production;
    std::uint32_t dot;
    std::uint32_t origin;
  };
  const std::size_t n = input.size();
  std::vector<std::vector<Item>> sets(n + 1);
  // waiting[j][A]: items in set j whose next symbol is nonterminal A.
  std::vector<std::unordered_map<int, std::vector<Item>>> waiting(n + 1);
  std::unordered_set<std::uint64_t> seen_current;
  std::unordered_set<std::uint64_t> seen_next;

  auto key = [](const Item& it) {
    return (static_cast<std::uint64_t>(it.production) << 40) | (static_cast<std::uint64_t>(it.dot) << 32) |
           it.origin;
  };
  auto add = [&](std::size_t set, std::unordered_set<std::uint64_t>& seen, const Item& it) {
    if (!seen.insert(key(it)).second) return;
    sets[set].push_back(it);
    const auto& rhs = g.productions[it.production].rhs;
    if (it.dot < rhs.size() && rhs[it.dot] >= 0) waiting[set][rhs[it.dot]].push_back(it);
  };

  add(0, seen_current, {static_cast<std::uint32_t>(g.start_production), 0, 0});
  for (std::size_t i = 0; i <= n; ++i) {
    if (sets[i].empty()) return false;
    for (std::size_t q = 0; q < sets[i].size(); ++q) {
      const Item it = sets[i][q];
      const auto& prod = g.productions[it.production];
      if (it.dot == prod.rhs.size()) {
        auto found = waiting[it.origin].find(prod.lhs);
        if (found == waiting[it.origin].end()) continue;
        // Indexing because the vector can grow when origin == i.
        for (std::size_t w = 0; w < found->second.size(); ++w) {
          const Item parent = found->second[w];
          add(i, seen_current, {parent.production, parent.dot + 1, parent.origin});
        }
        continue;
      }
      const int sym = prod.rhs[it.dot];
      if (sym < 0) {
        if (i < n && g.terminals[static_cast<std::size_t>(-sym - 1)].matches(input[i])) {
          add(i + 1, seen_next, {it.production, it.dot + 1, it.origin});
        }
        continue;
      }
      for (int p : g.by_lhs[static_cast<std::size_t>(sym)]) {
        add(i, seen_current, {static_cast<std::uint32_t>(p), 0, static_cast<std::uint32_t>(i)});
      }
      if (g.nullable[static_cast<std::size_t>(sym)]) add(i, seen_current, {it.production, it.dot + 1, it.origin});
    }
    seen_current.swap(seen_next);
    seen_next.clear();
  }
  for (const auto& it : sets[n]) {
    if (static_cast<int>(it.production) == g.start_production && it.dot == 1 && it.origin == 0) return true;
  }
  return false;
}

}  // namespace nlplan::llm
