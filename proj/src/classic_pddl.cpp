#include <algorithm>
#include <cctype>
#include <set>

#include "nlplan/classic.hpp"
#include "nlplan_embedded.hpp"

namespace nlplan::classic {

namespace {

const char* kind_name(PddlError::Kind kind) {
  switch (kind) {
    case PddlError::Kind::Lex: return "lex";
    case PddlError::Kind::Parse: return "parse";
    case PddlError::Kind::Semantic: return "semantic";
  }
  return "unknown";
}

}  // namespace

PddlError::PddlError(Kind kind, SourceLocation where, const std::string& message)
    : std::runtime_error(where.file + ":" + std::to_string(where.line) + ":" + std::to_string(where.column) + ": " +
                         kind_name(kind) + " error: " + message),
      kind_(kind),
      where_(std::move(where)),
      message_(message) {}

std::string to_string(const Atom& atom) {
  std::string out = "(" + atom.predicate;
  for (const auto& a : atom.args) out += " " + a;
  return out + ")";
}

const PredicateDecl* Domain::find_predicate(std::string_view name) const {
  for (const auto& p : predicates) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const ActionSchema* Domain::find_action(std::string_view name) const {
  for (const auto& a : actions) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

bool Domain::is_subtype(const std::string& type, const std::string& of) const {
  if (of == "object") return true;
  std::string current = type;
  for (std::size_t guard = 0; guard <= types.size(); ++guard) {
    if (current == of) return true;
    auto it = parent.find(current);
    if (it == parent.end()) return false;
    current = it->second;
  }
  return false;
}

const std::string* Problem::object_type(std::string_view object) const {
  for (const auto& [name, type] : objects) {
    if (name == object) return &type;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// S-expression reader

namespace {

struct SExpr {
  bool is_list{false};
  std::string atom;  // lowercased
  std::vector<SExpr> items;
  SourceLocation where;
};

class Reader {
 public:
  Reader(std::string_view text, std::string file) : text_(text), file_(std::move(file)) {}

  SExpr read_document() {
    skip();
    if (eof()) throw PddlError(PddlError::Kind::Parse, here(), "empty input");
    auto doc = read();
    skip();
    if (!eof()) throw PddlError(PddlError::Kind::Parse, here(), "unexpected text after the closing ')'");
    return doc;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  SourceLocation here() const { return {file_, line_, col_}; }

  void bump() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip() {
    while (!eof()) {
      const char c = text_[pos_];
      if (c == ';') {
        while (!eof() && text_[pos_] != '\n') bump();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        bump();
      } else {
        break;
      }
    }
  }

  static bool name_char(char c) {
    const auto uc = static_cast<unsigned char>(c);
    return std::isalnum(uc) || c == '-' || c == '_' || c == '?' || c == ':' || c == '.';
  }

  SExpr read() {
    skip();
    if (eof()) throw PddlError(PddlError::Kind::Parse, here(), "unexpected end of input");
    SExpr node;
    node.where = here();
    const char c = text_[pos_];
    if (c == '(') {
      bump();
      node.is_list = true;
      while (true) {
        skip();
        if (eof()) throw PddlError(PddlError::Kind::Parse, node.where, "unclosed '('");
        if (text_[pos_] == ')') {
          bump();
          break;
        }
        node.items.push_back(read());
      }
      return node;
    }
    if (c == ')') throw PddlError(PddlError::Kind::Parse, here(), "unexpected ')'");
    if (!name_char(c)) {
      throw PddlError(PddlError::Kind::Lex, here(), std::string("unexpected character '") + c + "'");
    }
    while (!eof() && name_char(text_[pos_])) {
      node.atom.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text_[pos_]))));
      bump();
    }
    return node;
  }

  std::string_view text_;
  std::string file_;
  std::size_t pos_{0};
  std::size_t line_{1};
  std::size_t col_{1};
};

[[noreturn]] void parse_fail(const SExpr& at, const std::string& msg) {
  throw PddlError(PddlError::Kind::Parse, at.where, msg);
}

[[noreturn]] void semantic_fail(const SExpr& at, const std::string& msg) {
  throw PddlError(PddlError::Kind::Semantic, at.where, msg);
}

const SExpr& expect_list(const SExpr& e, const std::string& what) {
  if (!e.is_list) parse_fail(e, "expected " + what + ", found '" + e.atom + "'");
  return e;
}

const std::string& expect_name(const SExpr& e, const std::string& what) {
  if (e.is_list) parse_fail(e, "expected " + what + ", found a list");
  return e.atom;
}

bool is_keyword(const SExpr& e, std::string_view kw) { return !e.is_list && e.atom == kw; }

// "(define (<kind> <name>) ...)" -> items after the header.
std::pair<std::string, std::vector<const SExpr*>> open_define(const SExpr& doc, std::string_view kind) {
  expect_list(doc, "(define ...)");
  if (doc.items.empty() || !is_keyword(doc.items[0], "define")) parse_fail(doc, "expected (define ...)");
  if (doc.items.size() < 2) parse_fail(doc, "missing (" + std::string(kind) + " <name>)");
  const auto& header = expect_list(doc.items[1], "(" + std::string(kind) + " <name>)");
  if (header.items.size() != 2 || !is_keyword(header.items[0], kind)) {
    parse_fail(header, "expected (" + std::string(kind) + " <name>)");
  }
  std::vector<const SExpr*> sections;
  for (std::size_t i = 2; i < doc.items.size(); ++i) sections.push_back(&doc.items[i]);
  return {expect_name(header.items[1], "name"), sections};
}

// "a b - t c" -> [(a,t),(b,t),(c,default_type)]
std::vector<std::pair<std::string, std::string>> typed_list(const std::vector<SExpr>& items, std::size_t from,
                                                            const std::string& default_type,
                                                            std::vector<const SExpr*>* locations = nullptr) {
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<const SExpr*> pending;
  for (std::size_t i = from; i < items.size(); ++i) {
    const auto& e = items[i];
    if (e.is_list) parse_fail(e, "unexpected list in typed list");
    if (e.atom == "-") {
      if (i + 1 >= items.size() || items[i + 1].is_list) parse_fail(e, "expected a type after '-'");
      if (pending.empty()) parse_fail(e, "'-' with nothing to type");
      const auto& type = items[i + 1].atom;
      for (const auto* p : pending) {
        out.emplace_back(p->atom, type);
        if (locations) locations->push_back(p);
      }
      pending.clear();
      ++i;
    } else {
      pending.push_back(&e);
    }
  }
  for (const auto* p : pending) {
    out.emplace_back(p->atom, default_type);
    if (locations) locations->push_back(p);
  }
  return out;
}

struct AtomSite {
  Atom atom;
  bool negated{false};
  const SExpr* where{nullptr};
};

Atom read_atom(const SExpr& e) {
  expect_list(e, "an atom");
  if (e.items.empty()) parse_fail(e, "empty atom");
  Atom atom{expect_name(e.items[0], "predicate name"), {}};
  for (std::size_t i = 1; i < e.items.size(); ++i) atom.args.push_back(expect_name(e.items[i], "argument"));
  return atom;
}

// Flattens "(and a b (not c))", a single atom, or "()".
std::vector<AtomSite> read_conjunction(const SExpr& e, bool allow_not) {
  std::vector<AtomSite> out;
  expect_list(e, "a condition");
  if (e.items.empty()) return out;
  if (is_keyword(e.items[0], "and")) {
    for (std::size_t i = 1; i < e.items.size(); ++i) {
      auto inner = read_conjunction(e.items[i], allow_not);
      out.insert(out.end(), inner.begin(), inner.end());
    }
    return out;
  }
  if (is_keyword(e.items[0], "not")) {
    if (!allow_not) semantic_fail(e, "negative preconditions are not supported");
    if (e.items.size() != 2) parse_fail(e, "(not ...) takes exactly one atom");
    out.push_back({read_atom(e.items[1]), true, &e.items[1]});
    return out;
  }
  for (const char* unsupported : {"or", "imply", "exists", "forall", "when", "increase", "decrease", "="}) {
    if (is_keyword(e.items[0], unsupported)) {
      semantic_fail(e, std::string("'") + unsupported + "' is outside the supported STRIPS subset");
    }
  }
  out.push_back({read_atom(e), false, &e});
  return out;
}

void check_atom(const Domain& d, const AtomSite& site, const std::map<std::string, std::string>& scope,
                const std::string& context) {
  const auto* pred = d.find_predicate(site.atom.predicate);
  if (!pred) semantic_fail(*site.where, "undeclared predicate '" + site.atom.predicate + "' in " + context);
  if (pred->params.size() != site.atom.args.size()) {
    semantic_fail(*site.where, "predicate '" + pred->name + "' takes " + std::to_string(pred->params.size()) +
                                   " arguments, got " + std::to_string(site.atom.args.size()) + " in " + context);
  }
  for (std::size_t i = 0; i < site.atom.args.size(); ++i) {
    const auto& arg = site.atom.args[i];
    auto it = scope.find(arg);
    if (it == scope.end()) {
      semantic_fail(*site.where, "unknown " + std::string(arg.starts_with('?') ? "variable" : "object") + " '" + arg +
                                     "' in " + context);
    }
    if (!d.is_subtype(it->second, pred->params[i].type)) {
      semantic_fail(*site.where, "argument '" + arg + "' of type '" + it->second + "' does not fit parameter " +
                                     std::to_string(i + 1) + " of '" + pred->name + "' (type '" +
                                     pred->params[i].type + "') in " + context);
    }
  }
}

void check_type(const Domain& d, const SExpr& at, const std::string& type) {
  if (type == "object") return;
  if (std::find(d.types.begin(), d.types.end(), type) == d.types.end()) {
    semantic_fail(at, "undeclared type '" + type + "'");
  }
}

std::vector<TypedParam> read_params(const Domain& d, const SExpr& list) {
  expect_list(list, "a parameter list");
  std::vector<const SExpr*> where;
  std::vector<TypedParam> params;
  for (auto& [name, type] : typed_list(list.items, 0, "object", &where)) {
    params.push_back({name, type});
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].name.starts_with('?')) parse_fail(*where[i], "parameter '" + params[i].name + "' must start with '?'");
    if (!seen.insert(params[i].name).second) semantic_fail(*where[i], "duplicate parameter '" + params[i].name + "'");
    check_type(d, *where[i], params[i].type);
  }
  return params;
}

}  // namespace

Domain parse_domain(std::string_view text, const std::string& file) {
  const auto doc = Reader(text, file).read_document();
  auto [name, sections] = open_define(doc, "domain");
  Domain d;
  d.name = name;
  bool have_types = false;
  for (const auto* section : sections) {
    expect_list(*section, "a domain section");
    if (section->items.empty()) parse_fail(*section, "empty section");
    const auto& head = expect_name(section->items[0], "section keyword");
    if (head == ":requirements") {
      for (std::size_t i = 1; i < section->items.size(); ++i) {
        const auto& req = expect_name(section->items[i], "requirement");
        if (req != ":strips" && req != ":typing") {
          semantic_fail(section->items[i], "unsupported requirement '" + req + "'");
        }
        d.requirements.push_back(req);
      }
    } else if (head == ":types") {
      have_types = true;
      std::vector<const SExpr*> where;
      for (auto& [type, parent] : typed_list(section->items, 1, "object", &where)) {
        if (std::find(d.types.begin(), d.types.end(), type) != d.types.end()) {
          semantic_fail(*where[d.types.size()], "duplicate type '" + type + "'");
        }
        d.types.push_back(type);
        if (parent != "object") d.parent[type] = parent;
      }
      for (std::size_t i = 0; i < d.types.size(); ++i) {
        if (auto it = d.parent.find(d.types[i]); it != d.parent.end()) check_type(d, *where[i], it->second);
      }
    } else if (head == ":predicates") {
      for (std::size_t i = 1; i < section->items.size(); ++i) {
        const auto& decl = expect_list(section->items[i], "a predicate declaration");
        if (decl.items.empty()) parse_fail(decl, "empty predicate declaration");
        PredicateDecl pred{expect_name(decl.items[0], "predicate name"), {}};
        if (d.find_predicate(pred.name)) semantic_fail(decl, "duplicate predicate '" + pred.name + "'");
        SExpr rest = decl;
        rest.items.erase(rest.items.begin());
        pred.params = read_params(d, rest);
        d.predicates.push_back(std::move(pred));
      }
    } else if (head == ":action") {
      if (section->items.size() < 2) parse_fail(*section, "action without a name");
      ActionSchema action{expect_name(section->items[1], "action name"), {}, {}, {}, {}};
      if (d.find_action(action.name)) semantic_fail(section->items[1], "duplicate action '" + action.name + "'");
      std::map<std::string, std::string> scope;
      for (std::size_t i = 2; i < section->items.size(); i += 2) {
        const auto& key = expect_name(section->items[i], "action keyword");
        if (i + 1 >= section->items.size()) parse_fail(section->items[i], "missing value for '" + key + "'");
        const auto& value = section->items[i + 1];
        if (key == ":parameters") {
          action.params = read_params(d, value);
          for (const auto& p : action.params) scope[p.name] = p.type;
        } else if (key == ":precondition") {
          for (auto& site : read_conjunction(value, false)) {
            check_atom(d, site, scope, "precondition of '" + action.name + "'");
            action.precondition.push_back(std::move(site.atom));
          }
        } else if (key == ":effect") {
          for (auto& site : read_conjunction(value, true)) {
            check_atom(d, site, scope, "effect of '" + action.name + "'");
            (site.negated ? action.del : action.add).push_back(std::move(site.atom));
          }
        } else {
          semantic_fail(section->items[i], "unsupported action keyword '" + key + "'");
        }
      }
      d.actions.push_back(std::move(action));
    } else {
      semantic_fail(section->items[0], "unsupported domain section '" + head + "'");
    }
  }
  if (!have_types && std::find(d.requirements.begin(), d.requirements.end(), ":typing") != d.requirements.end()) {
    // :typing without (:types) leaves everything as object.
  }
  return d;
}

Problem parse_problem(std::string_view text, const Domain& domain, const std::string& file) {
  const auto doc = Reader(text, file).read_document();
  auto [name, sections] = open_define(doc, "problem");
  Problem p;
  p.name = name;
  std::map<std::string, std::string> scope;
  for (const auto* section : sections) {
    expect_list(*section, "a problem section");
    if (section->items.empty()) parse_fail(*section, "empty section");
    const auto& head = expect_name(section->items[0], "section keyword");
    if (head == ":domain") {
      if (section->items.size() != 2) parse_fail(*section, "expected (:domain <name>)");
      p.domain_name = expect_name(section->items[1], "domain name");
      if (p.domain_name != domain.name) {
        semantic_fail(section->items[1], "problem is for domain '" + p.domain_name + "', not '" + domain.name + "'");
      }
    } else if (head == ":objects") {
      std::vector<const SExpr*> where;
      const auto objs = typed_list(section->items, 1, "object", &where);
      for (std::size_t i = 0; i < objs.size(); ++i) {
        check_type(domain, *where[i], objs[i].second);
        if (!scope.emplace(objs[i].first, objs[i].second).second) {
          semantic_fail(*where[i], "duplicate object '" + objs[i].first + "'");
        }
        p.objects.push_back(objs[i]);
      }
    } else if (head == ":init") {
      for (std::size_t i = 1; i < section->items.size(); ++i) {
        AtomSite site{read_atom(section->items[i]), false, &section->items[i]};
        check_atom(domain, site, scope, "init");
        p.init.insert(std::move(site.atom));
      }
    } else if (head == ":goal") {
      if (section->items.size() != 2) parse_fail(*section, "expected (:goal <condition>)");
      for (auto& site : read_conjunction(section->items[1], false)) {
        check_atom(domain, site, scope, "goal");
        p.goal.push_back(std::move(site.atom));
      }
    } else {
      semantic_fail(section->items[0], "unsupported problem section '" + head + "'");
    }
  }
  if (p.domain_name.empty()) parse_fail(doc, "problem has no (:domain ...) section");
  return p;
}

// ---------------------------------------------------------------------------
// Pretty printing

namespace {

std::string params_text(const std::vector<TypedParam>& params) {
  std::string out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) out += ' ';
    out += params[i].name + " - " + params[i].type;
  }
  return out;
}

}  // namespace

std::string to_pddl(const Domain& d) {
  std::string out = "(define (domain " + d.name + ")\n";
  if (!d.requirements.empty()) {
    out += "  (:requirements";
    for (const auto& r : d.requirements) out += " " + r;
    out += ")\n";
  }
  if (!d.types.empty()) {
    out += "  (:types";
    for (const auto& t : d.types) {
      out += " " + t;
      if (auto it = d.parent.find(t); it != d.parent.end()) out += " - " + it->second;
    }
    out += ")\n";
  }
  out += "  (:predicates";
  for (const auto& p : d.predicates) {
    out += "\n    (" + p.name;
    if (!p.params.empty()) out += " " + params_text(p.params);
    out += ")";
  }
  out += ")\n";
  for (const auto& a : d.actions) {
    out += "  (:action " + a.name + "\n";
    out += "    :parameters (" + params_text(a.params) + ")\n";
    out += "    :precondition (and";
    for (const auto& atom : a.precondition) out += " " + to_string(atom);
    out += ")\n    :effect (and";
    for (const auto& atom : a.add) out += " " + to_string(atom);
    for (const auto& atom : a.del) out += " (not " + to_string(atom) + ")";
    out += "))\n";
  }
  out += ")\n";
  return out;
}

std::string to_pddl(const Problem& p) {
  std::string out = "(define (problem " + p.name + ")\n  (:domain " + p.domain_name + ")\n  (:objects";
  for (const auto& [name, type] : p.objects) out += "\n    " + name + " - " + type;
  out += ")\n  (:init";
  for (const auto& atom : p.init) out += "\n    " + to_string(atom);
  out += ")\n  (:goal (and";
  for (const auto& atom : p.goal) out += " " + to_string(atom);
  out += ")))\n";
  return out;
}

std::string_view greeting_domain_text() { return embedded::kGreetingPddl; }

const Domain& greeting_domain() {
  static const Domain domain = parse_domain(greeting_domain_text(), "greeting.pddl");
  return domain;
}

}  // namespace nlplan::classic
