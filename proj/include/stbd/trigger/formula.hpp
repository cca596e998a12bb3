#pragma once

// Spatial constraint formulas over the relative position of an attacker
// unit (ex, ey) and the backdoored agent (bx, by).

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stbd/arena.hpp"

namespace stbd::trigger {

enum class Feature { ex, ey, bx, by };
enum class BinOp { add, sub, mul, div };
enum class Relator { gt, ge, lt, le, eq, ne };

inline constexpr double kEqualityTolerance = 1e-9;

inline const char* to_string(Feature f) {
  switch (f) {
    case Feature::ex: return "ex";
    case Feature::ey: return "ey";
    case Feature::bx: return "bx";
    case Feature::by: return "by";
  }
  return "?";
}

inline const char* to_string(BinOp op) {
  switch (op) {
    case BinOp::add: return "+";
    case BinOp::sub: return "-";
    case BinOp::mul: return "*";
    case BinOp::div: return "/";
  }
  return "?";
}

inline const char* to_string(Relator r) {
  switch (r) {
    case Relator::gt: return ">";
    case Relator::ge: return ">=";
    case Relator::lt: return "<";
    case Relator::le: return "<=";
    case Relator::eq: return "==";
    case Relator::ne: return "!=";
  }
  return "?";
}

inline bool holds(double lhs, Relator r, double rhs) {
  switch (r) {
    case Relator::gt: return lhs > rhs;
    case Relator::ge: return lhs >= rhs;
    case Relator::lt: return lhs < rhs;
    case Relator::le: return lhs <= rhs;
    case Relator::eq: return std::abs(lhs - rhs) <= kEqualityTolerance;
    case Relator::ne: return std::abs(lhs - rhs) > kEqualityTolerance;
  }
  return false;
}

// Arithmetic over unit coordinates. Leaves are features; inner nodes binary.
struct Expr {
  std::optional<Feature> feature;
  BinOp op = BinOp::sub;
  std::shared_ptr<const Expr> lhs, rhs;
  int parens = 0;  // explicit parenthesis pairs written around this node

  static std::shared_ptr<const Expr> leaf(Feature f) {
    auto e = std::make_shared<Expr>();
    e->feature = f;
    return e;
  }
  static std::shared_ptr<const Expr> binary(BinOp op, std::shared_ptr<const Expr> l, std::shared_ptr<const Expr> r) {
    auto e = std::make_shared<Expr>();
    e->op = op;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
  }
};
using ExprPtr = std::shared_ptr<const Expr>;

// Empty result when a denominator is zero.
inline std::optional<double> evaluate(const Expr& e, Vec2 b, Vec2 a) {
  if (e.feature) {
    switch (*e.feature) {
      case Feature::ex: return a.x;
      case Feature::ey: return a.y;
      case Feature::bx: return b.x;
      case Feature::by: return b.y;
    }
  }
  const auto l = evaluate(*e.lhs, b, a);
  const auto r = evaluate(*e.rhs, b, a);
  if (!l || !r) return std::nullopt;
  switch (e.op) {
    case BinOp::add: return *l + *r;
    case BinOp::sub: return *l - *r;
    case BinOp::mul: return *l * *r;
    case BinOp::div:
      if (*r == 0.0) return std::nullopt;
      return *l / *r;
  }
  return std::nullopt;
}

// A literal keeps its source spelling so files print back unchanged.
struct Number {
  double value = 0.0;
  std::string text;
};

struct SpatialAtom {
  int offset = 0;  // relative to the window end, in [-(N-1), 0]
  ExprPtr expr;
  Relator rel = Relator::lt;
  Number constant;
};

// Positions of the backdoored agent and the attacker at one step; empty when
// the unit is dead or absent.
struct Frame {
  std::optional<Vec2> b;
  std::optional<Vec2> e;
};

inline bool eval_atom(const SpatialAtom& atom, const std::optional<Vec2>& b, const std::optional<Vec2>& e) {
  if (!b || !e || !atom.expr) return false;
  const auto v = evaluate(*atom.expr, *b, *e);
  return v && holds(*v, atom.rel, atom.constant.value);
}

// One named line of a trigger file: a single comparison, or the interval
// sugar `lo < expr < hi` that stands for two atoms.
struct Constraint {
  std::string name;
  bool auto_named = false;
  int offset = 0;
  ExprPtr expr;
  bool interval = false;
  Relator rel = Relator::lt;  // single form
  Number constant;            // single form
  Number lower, upper;        // interval form
  Relator lower_rel = Relator::lt, upper_rel = Relator::lt;  // written between the bounds and expr

  std::vector<SpatialAtom> atoms() const {
    if (!interval) return {SpatialAtom{offset, expr, rel, constant}};
    // lo < expr  <=>  expr > lo
    auto flip = [](Relator r) { return r == Relator::lt ? Relator::gt : Relator::ge; };
    return {SpatialAtom{offset, expr, flip(lower_rel), lower}, SpatialAtom{offset, expr, upper_rel, upper}};
  }

  bool eval(const Frame& f) const {
    for (const auto& a : atoms())
      if (!eval_atom(a, f.b, f.e)) return false;
    return true;
  }
};

struct Formula {
  enum class Kind { leaf, conj, disj, ite };
  Kind kind = Kind::leaf;
  int constraint = -1;  // leaf: index into the constraint list
  std::vector<Formula> children;

  static Formula leaf(int index) {
    Formula f;
    f.constraint = index;
    return f;
  }
  static Formula make(Kind k, std::vector<Formula> children) {
    Formula f;
    f.kind = k;
    f.children = std::move(children);
    return f;
  }
  friend bool operator==(const Formula&, const Formula&) = default;
};

// Leaf truth values supplied by the caller, so the same evaluator serves
// direct and table-driven matching.
template <typename LeafFn>
bool eval_tree(const Formula& f, const LeafFn& leaf) {
  switch (f.kind) {
    case Formula::Kind::leaf: return leaf(f.constraint);
    case Formula::Kind::conj:
      for (const auto& c : f.children)
        if (!eval_tree(c, leaf)) return false;
      return true;
    case Formula::Kind::disj:
      for (const auto& c : f.children)
        if (eval_tree(c, leaf)) return true;
      return false;
    case Formula::Kind::ite:
      return eval_tree(f.children[0], leaf) ? eval_tree(f.children[1], leaf) : eval_tree(f.children[2], leaf);
  }
  return false;
}

struct TriggerSpec {
  int window = 1;
  std::vector<Constraint> constraints;
  Formula formula;
  bool explicit_formula = false;
  std::vector<ArenaAction> actions;

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < constraints.size(); ++i)
      if (constraints[i].name == name) return static_cast<int>(i);
    return -1;
  }

  // Constraints checked on the first frame of the window; used to pick an attacker.
  std::vector<int> anchor() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < constraints.size(); ++i)
      if (constraints[i].offset == -(window - 1)) out.push_back(static_cast<int>(i));
    return out;
  }
};

// window.size() must equal spec.window; window.back() is offset 0.
inline bool eval_formula(const TriggerSpec& spec, std::span<const Frame> window) {
  if (static_cast<int>(window.size()) != spec.window)
    throw ValidationError("eval_formula: window has " + std::to_string(window.size()) + " frames, expected " +
                          std::to_string(spec.window));
  const int last = spec.window - 1;
  return eval_tree(spec.formula, [&](int c) {
    const auto& con = spec.constraints[static_cast<std::size_t>(c)];
    return con.eval(window[static_cast<std::size_t>(last + con.offset)]);
  });
}

}  // namespace stbd::trigger
