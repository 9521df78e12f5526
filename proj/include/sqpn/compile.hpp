#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sqpn/constraints.hpp"
#include "sqpn/formula.hpp"
#include "sqpn/model.hpp"

namespace sqpn {

enum class Sense { minimize, maximize };

/// var := sum of monomials over earlier variables (constants allowed).
struct Definition {
  int var = -1;
  std::vector<Monomial> rhs;
};

/// var := numerator / denominator wherever the denominator is positive.
struct RatioDef {
  int var = -1;
  int numerator = -1;
  int denominator = -1;
};

/// A free family row: the variables of one conditional distribution (theta
/// role) or one location-hyperparameter row (hyper_t role); they sum to one.
struct FamilyRow {
  int node = -1;
  int config = -1;
  VarRole role = VarRole::theta;
  std::vector<int> vars;
};

struct VeStats {
  std::vector<long> bucket_configs;  // output configurations per bucket
  long constraints = 0;
};

/// Objective + constraints + box bounds, plus the evaluation plan (definition
/// order, ratio variables, free rows) used for box propagation and refinement.
struct MultilinearProgram {
  ConstraintSet cs;
  std::vector<Monomial> objective;
  std::vector<Definition> defs;
  std::vector<RatioDef> ratios;
  std::vector<FamilyRow> rows;
  std::vector<int> primal;  // free theta/t/ratio variable ids
  std::string objective_desc;
};

/// Min-fill order over the variables to eliminate (keep and evidence
/// variables excluded), ties broken by variable id.
std::vector<int> elimination_order(const Network& net, const std::vector<int>& keep,
                                   const Evidence& evidence);

struct VeTable {
  std::vector<int> keep;   // kept variable ids, ascending
  std::vector<int> cells;  // message var per keep config, first variable most significant
  int cell(const Network& net, const std::vector<int>& values) const;
};

/// Symbolic variable elimination: one fresh message variable per (bucket,
/// output configuration), each defined by an equality constraint; monomials of
/// degree > 2 are decomposed into chained bilinear auxiliaries. Boxes come
/// from interval arithmetic over the input boxes. Returns the table of final
/// messages, one per configuration of `keep`, each equal to P(keep config,
/// evidence).
VeTable symbolic_ve(const Network& net, const std::vector<int>& keep, const Evidence& evidence,
                    ConstraintSet& cs, std::vector<Definition>& defs, VeStats* stats = nullptr);

/// Program whose objective is r - m_{P(q)} with r * m_{P(e)} = m_{P(q,e)};
/// minimize and maximize the same program for the two bound directions.
/// Logic assessments attached to the network are compiled in.
MultilinearProgram pose_influence_query(const Network& net, const Query& query);

/// Objective m_{P(q)}, or the ratio variable r when evidence is present.
MultilinearProgram pose_marginal_query(const Network& net, int variable, int value,
                                       const Evidence& evidence = {});

/// Constraints tying P(formula, condition) to alpha * P(condition); the
/// conditional is multiplied through, no division is introduced.
ConstraintSet compile_logic_assessment(const Network& net, const BooleanFormula& formula,
                                       const Evidence& condition, double alpha);

Sign classify_sign(double min_value, double max_value, double eps);

std::string dump_program(const MultilinearProgram& p);

// --- program evaluation utilities ---

/// Family-row membership of theta/t variables, used to evaluate interval
/// bounds that respect the row simplex (sum-to-one) structure.
struct RowMap {
  std::vector<int> row_of;             // var id -> row ordinal, -1 outside rows
  std::vector<std::vector<int>> rows;  // row ordinal -> member variable ids
};

RowMap build_row_map(const ConstraintSet& cs);

/// Interval hull of a monomial sum over the box. Monomials sharing identical
/// partner variables and drawing their remaining variable from one family row
/// are bounded jointly over the row simplex, which is much tighter than
/// independent interval arithmetic.
Interval terms_interval(const std::vector<Monomial>& terms, const std::vector<Interval>& box,
                        const RowMap& rows);

std::vector<Interval> initial_box(const MultilinearProgram& p);
double evaluate_terms(const std::vector<Monomial>& terms, const Eigen::VectorXd& x);
/// Forward-evaluates all definitions in order, then ratio variables (left
/// untouched where the denominator is ~0).
void sweep_definitions(const MultilinearProgram& p, Eigen::VectorXd& x);
double evaluate_objective(const MultilinearProgram& p, const Eigen::VectorXd& x);
/// Maximum violation over all constraints and boxes.
double max_violation(const MultilinearProgram& p, const Eigen::VectorXd& x);

}  // namespace sqpn
