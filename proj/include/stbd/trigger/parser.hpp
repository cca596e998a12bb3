#pragma once

// Line-oriented trigger files:
//
//   trigger v1
//   window 5
//   [name:] at -4: 8.8 < ex - bx < 9.0
//   [name:] at 0: ey - by == 0
//   formula: and(c1, or(c2, c3), ite(c4, c5, c6))     (optional; default is and of all)
//   actions: [west, east, west, east, stop]
//
// '#' starts a comment. Unnamed constraints are called c1, c2, ... in file order.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "stbd/trigger/formula.hpp"

namespace stbd::trigger {

inline constexpr const char* kTriggerHeader = "trigger v1";

class ParseError : public ValidationError {
 public:
  ParseError(int line, int column, const std::string& msg)
      : ValidationError("trigger:" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

namespace detail {

struct Token {
  enum Kind { ident, number, symbol, end } kind = end;
  std::string text;
  int column = 0;  // 1-based
};

inline std::vector<Token> lex(std::string_view line, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token t;
    t.column = static_cast<int>(i) + 1;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
      t.kind = Token::ident;
      t.text = std::string(line.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
        if (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) {
          while (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) ++k;
          j = k;
        }
      }
      t.kind = Token::number;
      t.text = std::string(line.substr(i, j - i));
      i = j;
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "==", "!="};
      t.kind = Token::symbol;
      t.text = std::string(1, c);
      for (auto s : two)
        if (line.substr(i, 2) == s) t.text = std::string(s);
      if (std::string_view("+-*/()<>:,[]").find(c) == std::string_view::npos && t.text.size() == 1)
        throw ParseError(line_no, t.column, std::string("unexpected character '") + c + "'");
      i += t.text.size();
    }
    out.push_back(std::move(t));
  }
  Token e;
  e.column = static_cast<int>(line.size()) + 1;
  out.push_back(e);
  return out;
}

inline bool is_keyword(const std::string& s) {
  static const std::set<std::string> kw{"at", "window", "formula", "actions", "and", "or", "ite",
                                        "ex", "ey",    "bx",      "by",      "trigger"};
  return kw.count(s) > 0;
}

class LineParser {
 public:
  LineParser(std::vector<Token> toks, int line) : toks_(std::move(toks)), line_(line) {}

  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at_end() const { return peek().kind == Token::end; }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw ParseError(line_, t.column, msg + (t.kind == Token::end ? " at end of line" : " near '" + t.text + "'"));
  }

  bool accept(std::string_view sym) {
    if ((peek().kind == Token::symbol || peek().kind == Token::ident) && peek().text == sym) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view sym) {
    if (!accept(sym)) fail(peek(), "expected '" + std::string(sym) + "'");
  }
  void expect_end() {
    if (!at_end()) fail(peek(), "unexpected trailing input");
  }

  int integer() {
    const Token t = next();
    int v = 0;
    if (t.kind != Token::number) fail(t, "expected an integer");
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size()) fail(t, "expected an integer");
    return v;
  }

  Number number() {
    std::string sign;
    const Token first = peek();
    if (accept("-")) sign = "-";
    else if (accept("+")) sign = "+";
    const Token t = next();
    if (t.kind != Token::number) fail(sign.empty() ? t : first, "expected a number");
    Number n;
    n.text = sign + t.text;
    const char* b = t.text.data();
    auto [p, ec] = std::from_chars(b, b + t.text.size(), n.value);
    if (ec != std::errc() || p != b + t.text.size()) fail(t, "malformed number");
    if (sign == "-") n.value = -n.value;
    return n;
  }

  std::optional<Relator> relator() {
    static const std::pair<std::string_view, Relator> table[] = {{">=", Relator::ge}, {"<=", Relator::le},
                                                                 {"==", Relator::eq}, {"!=", Relator::ne},
                                                                 {">", Relator::gt},  {"<", Relator::lt}};
    for (auto [s, r] : table)
      if (peek().kind == Token::symbol && peek().text == s) {
        ++pos_;
        return r;
      }
    return std::nullopt;
  }

  ExprPtr expr() {
    ExprPtr lhs = term();
    while (peek().kind == Token::symbol && (peek().text == "+" || peek().text == "-")) {
      const BinOp op = next().text == "+" ? BinOp::add : BinOp::sub;
      lhs = Expr::binary(op, lhs, term());
    }
    return lhs;
  }

  ExprPtr term() {
    ExprPtr lhs = factor();
    while (peek().kind == Token::symbol && (peek().text == "*" || peek().text == "/")) {
      const BinOp op = next().text == "*" ? BinOp::mul : BinOp::div;
      lhs = Expr::binary(op, lhs, factor());
    }
    return lhs;
  }

  ExprPtr factor() {
    const Token t = peek();
    if (accept("(")) {
      auto inner = std::make_shared<Expr>(*expr());
      inner->parens += 1;
      expect(")");
      return inner;
    }
    if (t.kind == Token::ident) {
      static const std::pair<std::string_view, Feature> feats[] = {
          {"ex", Feature::ex}, {"ey", Feature::ey}, {"bx", Feature::bx}, {"by", Feature::by}};
      for (auto [s, f] : feats)
        if (t.text == s) {
          ++pos_;
          return Expr::leaf(f);
        }
    }
    fail(t, "expected ex, ey, bx, by or '('");
  }

  Constraint constraint() {
    Constraint c;
    if (peek().kind == Token::number || ((peek().text == "-" || peek().text == "+") && peek(1).kind == Token::number)) {
      c.interval = true;
      c.lower = number();
      const Token rt = peek();
      auto lo = relator();
      if (!lo || (*lo != Relator::lt && *lo != Relator::le)) fail(rt, "interval bounds take '<' or '<='");
      c.lower_rel = *lo;
      c.expr = expr();
      const Token rt2 = peek();
      auto hi = relator();
      if (!hi || (*hi != Relator::lt && *hi != Relator::le)) fail(rt2, "interval bounds take '<' or '<='");
      c.upper_rel = *hi;
      c.upper = number();
    } else {
      c.expr = expr();
      const Token rt = peek();
      auto r = relator();
      if (!r) fail(rt, "expected a relator");
      c.rel = *r;
      c.constant = number();
    }
    expect_end();
    return c;
  }

  Formula formula(std::vector<std::pair<std::string, int>>& refs) {
    const Token t = next();
    if (t.kind != Token::ident) fail(t, "expected a constraint name, and(...), or(...) or ite(...)");
    if (t.text == "and" || t.text == "or" || t.text == "ite") {
      expect("(");
      std::vector<Formula> kids{formula(refs)};
      while (accept(",")) kids.push_back(formula(refs));
      const Token close = peek();
      expect(")");
      if (t.text == "ite" && kids.size() != 3) fail(close, "ite takes exactly three arguments");
      if (t.text != "ite" && kids.size() < 2) fail(close, t.text + " takes at least two arguments");
      const auto kind = t.text == "and" ? Formula::Kind::conj : t.text == "or" ? Formula::Kind::disj : Formula::Kind::ite;
      return Formula::make(kind, std::move(kids));
    }
    if (is_keyword(t.text)) fail(t, "keyword used as a constraint name");
    refs.emplace_back(t.text, t.column);
    Formula leaf = Formula::leaf(-1);
    leaf.constraint = -static_cast<int>(refs.size());  // resolved after all constraints are read
    return leaf;
  }

  std::vector<ArenaAction> action_list() {
    expect("[");
    std::vector<ArenaAction> out;
    if (accept("]")) return out;
    do {
      const Token t = next();
      if (t.kind != Token::ident) fail(t, "expected an action name");
      if (t.text == "attack") {
        expect("(");
        const int slot = integer();
        expect(")");
        if (slot < 0) fail(t, "attack slot must be non-negative");
        out.push_back(ArenaAction::attack(slot));
      } else if (auto a = parse_move_action(t.text)) {
        out.push_back(*a);
      } else {
        fail(t, "unknown action '" + t.text + "'");
      }
    } while (accept(","));
    expect("]");
    expect_end();
    return out;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
};

inline void resolve(Formula& f, const std::vector<std::pair<std::string, int>>& refs, const TriggerSpec& spec,
                    int line) {
  if (f.kind == Formula::Kind::leaf) {
    const auto& [name, col] = refs[static_cast<std::size_t>(-f.constraint - 1)];
    const int idx = spec.find(name);
    if (idx < 0) throw ParseError(line, col, "unknown constraint '" + name + "'");
    f.constraint = idx;
    return;
  }
  for (auto& c : f.children) resolve(c, refs, spec, line);
}

inline int precedence(BinOp op) { return op == BinOp::add || op == BinOp::sub ? 1 : 2; }

inline void print_expr(std::ostream& os, const Expr& e, bool force_parens = false) {
  const int parens = std::max(e.parens, force_parens ? 1 : 0);
  for (int i = 0; i < parens; ++i) os << '(';
  if (e.feature) {
    os << to_string(*e.feature);
  } else {
    const int p = precedence(e.op);
    print_expr(os, *e.lhs, !e.lhs->feature && precedence(e.lhs->op) < p);
    os << ' ' << to_string(e.op) << ' ';
    print_expr(os, *e.rhs, !e.rhs->feature && precedence(e.rhs->op) <= p);
  }
  for (int i = 0; i < parens; ++i) os << ')';
}

inline std::string number_text(const Number& n) {
  if (!n.text.empty()) return n.text;
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, n.value);
  return std::string(buf, p);
}

inline void print_formula(std::ostream& os, const Formula& f, const TriggerSpec& spec) {
  if (f.kind == Formula::Kind::leaf) {
    os << spec.constraints[static_cast<std::size_t>(f.constraint)].name;
    return;
  }
  os << (f.kind == Formula::Kind::conj ? "and" : f.kind == Formula::Kind::disj ? "or" : "ite") << '(';
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    if (i) os << ", ";
    print_formula(os, f.children[i], spec);
  }
  os << ')';
}

}  // namespace detail

inline Formula conjunction_of_all(std::size_t n) {
  if (n == 1) return Formula::leaf(0);
  std::vector<Formula> kids;
  for (std::size_t i = 0; i < n; ++i) kids.push_back(Formula::leaf(static_cast<int>(i)));
  return Formula::make(Formula::Kind::conj, std::move(kids));
}

inline TriggerSpec parse_trigger(std::string_view text) {
  TriggerSpec spec;
  std::optional<int> window_line, actions_line, formula_line;
  std::vector<int> constraint_lines;
  std::vector<std::pair<std::string, int>> refs;
  bool header = false;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = nl + 1;
    ++line_no;
    auto toks = detail::lex(line, line_no);
    if (toks.front().kind == detail::Token::end) continue;
    detail::LineParser p(std::move(toks), line_no);

    if (!header) {
      const auto t = p.peek();
      if (!p.accept("trigger")) throw ParseError(line_no, t.column, "missing 'trigger v1' header");
      const auto v = p.next();
      if (v.kind != detail::Token::ident || v.text != "v1")
        throw ParseError(line_no, v.column, "unsupported trigger file version '" + v.text + "'");
      p.expect_end();
      header = true;
      continue;
    }

    const auto first = p.peek();
    if (p.accept("window")) {
      if (window_line) throw ParseError(line_no, first.column, "duplicate window line");
      const auto t = p.peek();
      spec.window = p.integer();
      if (spec.window <= 0) throw ParseError(line_no, t.column, "window must be positive");
      p.expect_end();
      window_line = line_no;
    } else if (p.accept("actions")) {
      if (actions_line) throw ParseError(line_no, first.column, "duplicate actions line");
      p.expect(":");
      spec.actions = p.action_list();
      actions_line = line_no;
    } else if (p.accept("formula")) {
      if (formula_line) throw ParseError(line_no, first.column, "duplicate formula line");
      p.expect(":");
      spec.formula = p.formula(refs);
      p.expect_end();
      spec.explicit_formula = true;
      formula_line = line_no;
    } else {
      Constraint c;
      if (first.kind == detail::Token::ident && first.text != "at") {
        if (detail::is_keyword(first.text)) p.fail(first, "keyword used as a constraint name");
        p.next();
        p.expect(":");
        c.name = first.text;
      }
      const auto at = p.peek();
      if (!p.accept("at")) p.fail(at, "expected 'at', 'window', 'formula' or 'actions'");
      const bool neg = p.accept("-");
      const auto off_tok = p.peek();
      int k = p.integer();
      if (neg) k = -k;
      else if (k != 0) throw ParseError(line_no, off_tok.column, "time offsets are written -k (k >= 0)");
      p.expect(":");
      auto parsed = p.constraint();
      parsed.offset = k;
      if (c.name.empty()) {
        parsed.name = "c" + std::to_string(spec.constraints.size() + 1);
        parsed.auto_named = true;
      } else {
        parsed.name = c.name;
      }
      if (spec.find(parsed.name) >= 0) throw ParseError(line_no, first.column, "duplicate constraint '" + parsed.name + "'");
      spec.constraints.push_back(std::move(parsed));
      constraint_lines.push_back(line_no);
    }
  }

  if (!header) throw ParseError(1, 1, "missing 'trigger v1' header");
  if (!window_line) throw ParseError(line_no, 1, "missing window line");
  if (!actions_line) throw ParseError(line_no, 1, "missing actions line");
  if (spec.constraints.empty()) throw ParseError(line_no, 1, "no constraints");
  for (std::size_t i = 0; i < spec.constraints.size(); ++i) {
    const int off = spec.constraints[i].offset;
    if (off < -(spec.window - 1) || off > 0)
      throw ParseError(constraint_lines[i], 1,
                       "offset " + std::to_string(off) + " lies outside window " + std::to_string(spec.window));
  }
  if (static_cast<int>(spec.actions.size()) != spec.window)
    throw ParseError(*actions_line, 1,
                     "expected " + std::to_string(spec.window) + " actions, got " + std::to_string(spec.actions.size()));
  if (spec.explicit_formula) detail::resolve(spec.formula, refs, spec, *formula_line);
  else spec.formula = conjunction_of_all(spec.constraints.size());
  return spec;
}

inline TriggerSpec load_trigger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read trigger file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trigger(ss.str());
}

inline std::string print_trigger(const TriggerSpec& spec) {
  std::ostringstream os;
  os << kTriggerHeader << "\nwindow " << spec.window << '\n';
  for (const auto& c : spec.constraints) {
    if (!c.auto_named) os << c.name << ": ";
    os << "at " << (c.offset == 0 ? "0" : std::to_string(c.offset)) << ": ";
    if (c.interval) {
      os << detail::number_text(c.lower) << ' ' << to_string(c.lower_rel) << ' ';
      detail::print_expr(os, *c.expr);
      os << ' ' << to_string(c.upper_rel) << ' ' << detail::number_text(c.upper);
    } else {
      detail::print_expr(os, *c.expr);
      os << ' ' << to_string(c.rel) << ' ' << detail::number_text(c.constant);
    }
    os << '\n';
  }
  if (spec.explicit_formula) {
    os << "formula: ";
    detail::print_formula(os, spec.formula, spec);
    os << '\n';
  }
  os << "actions: [";
  for (std::size_t i = 0; i < spec.actions.size(); ++i) os << (i ? ", " : "") << to_string(spec.actions[i]);
  os << "]\n";
  return os.str();
}

}  // namespace stbd::trigger
