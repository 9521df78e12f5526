#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "sqpn/model.hpp"

namespace sqpn {

enum class VarRole { theta, hyper_t, message, auxiliary };

/// One optimization variable. For theta/hyper_t the triple is (node, value,
/// parent config); for messages it is (bucket, config); auxiliaries carry an
/// ordinal only.
struct ParamVar {
  int id = -1;
  VarRole role = VarRole::theta;
  int node = -1;
  int value = -1;
  int config = -1;
  Interval box{0.0, 1.0};
  std::string name() const;  // theta[i][j][k], t[i][j][k], m[b][c], aux[n]
};

/// coeff * product of distinct variables; an empty variable list denotes a
/// constant term (only used inside definitions).
struct Monomial {
  double coeff = 1.0;
  std::vector<int> vars;  // ascending ids, no repeats
  int degree() const { return static_cast<int>(vars.size()); }
};

enum class Cmp { le, eq, ge };

enum class ConstraintGroup { normalization, definition, relation, logic, other };

struct MultilinearConstraint {
  std::vector<Monomial> terms;
  Cmp cmp = Cmp::eq;
  double rhs = 0.0;
  ConstraintGroup group = ConstraintGroup::other;
  int defined_var = -1;  // >= 0 for message/aux/affine definitions
  std::string tag;
};

struct ConstraintSet {
  std::vector<ParamVar> vars;
  std::vector<MultilinearConstraint> constraints;
  // groups of message variables whose values provably sum to one (tables of
  // ancestrally closed, evidence-free buckets); used for bound tightening
  std::vector<std::vector<int>> unit_mass_groups;

  int add_var(VarRole role, int a, int b, int c, Interval box);
  void add_constraint(MultilinearConstraint c);  // canonicalizes; drops empty rows
  int theta(int node, int value, int config) const;  // -1 when absent
  int hyper(int node, int value, int config) const;
  const Interval& box(int var) const { return vars[static_cast<size_t>(var)].box; }

 private:
  std::map<std::tuple<int, int, int>, int> theta_ids_;
  std::map<std::tuple<int, int, int>, int> t_ids_;
};

/// Declares every parameter variable (numeric rows pin the box to a point),
/// emits normalization for free rows and, for learned credal rows, the simplex
/// over t plus the affine link from t to theta.
ConstraintSet compile_parameter_space(const Network& net);

/// Parameter declarations + normalization + one constraint per relation and
/// applicable parent-context instantiation. Interval rows are not applied.
ConstraintSet compile_relations(const Network& net);

/// Parameter declarations + normalization with interval rows tightened into
/// the variable boxes. Relations are not applied.
ConstraintSet compile_interval_assessments(const Network& net);

/// Affine coefficients of a learned credal entry: theta = scale * t + offset.
void idm_affine(const IdmRow& row, int value, double* scale, double* offset);

std::string format_terms(const ConstraintSet& cs, const std::vector<Monomial>& terms);
std::string format_constraint(const ConstraintSet& cs, const MultilinearConstraint& c);

}  // namespace sqpn
