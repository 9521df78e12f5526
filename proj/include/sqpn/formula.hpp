#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sqpn/model.hpp"

namespace sqpn {

/// Propositional formula tree. Negation has one operand, conjunction and
/// disjunction have exactly two; n-ary connectives parse to left-nested chains.
struct BooleanFormula {
  enum class Kind { variable, negation, conjunction, disjunction };
  Kind kind = Kind::variable;
  std::string name;                      // variable reference
  std::vector<BooleanFormula> operands;

  bool evaluate(const std::map<std::string, bool>& assignment) const;
  int operator_count() const;
};

BooleanFormula parse_formula(const std::string& text);
std::string to_string(const BooleanFormula& f);

/// Variables mentioned by the formula, sorted by name, unique.
std::vector<std::string> formula_variables(const BooleanFormula& f);

/// Builds the decision-gadget network for a formula and split point k:
/// free binary roots for the first k variables (by sorted name), uniform
/// priors for the rest, one deterministic node per operator, plus the dummy
/// child Q of the root operator with the fresh free root E. The returned
/// query asks for the influence of {E=e} on Q.
std::pair<Network, Query> build_emajsat_gadget(const BooleanFormula& phi, int k);

}  // namespace sqpn
