#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace sqpn {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool is_point(double tol = 0.0) const { return hi - lo <= tol; }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
  bool empty(double tol = 0.0) const { return lo > hi + tol; }
};

inline Interval intersect(const Interval& a, const Interval& b) {
  return Interval{a.lo > b.lo ? a.lo : b.lo, a.hi < b.hi ? a.hi : b.hi};
}

/// Sign of an influence or synergy: the same four-valued scale is used for
/// relation annotations and for classified query results.
enum class Sign { positive, negative, zero, ambiguous };

char sign_symbol(Sign s);
Sign sign_from_symbol(char c);  // throws ParseError on unknown symbol
std::string sign_word(Sign s);

enum class RelationKind {
  influence,
  additive_synergy,
  product_synergy,
  situational,
  weak,
  strong,
};

std::string relation_kind_name(RelationKind k);

/// A qualitative statement attached to a node, constraining its conditional
/// distribution relative to one or two parents. Value index 0 is the "higher"
/// value everywhere.
struct QualitativeRelation {
  RelationKind kind = RelationKind::influence;
  Sign sign = Sign::positive;
  std::vector<int> sources;    // parent variable ids; one for influences, two for synergies
  double delta = 0.0;          // cut-off for weak/strong influences
  std::map<int, int> context;  // situational only: full instantiation of pa(B) \ {A}
  int target_value = 0;        // product synergy only: value index of the owning node
};

/// Learned credal row: theta_j(t) = (s * t_j + counts_j) / (s + counts.sum()),
/// with t a free location vector on the simplex.
struct IdmRow {
  double s = 2.0;
  Eigen::VectorXd counts;
  double denominator() const { return s + counts.sum(); }
};

struct Variable {
  int id = -1;
  std::string name;
  std::vector<std::string> value_names;  // first listed value is the "higher" value
  int cardinality() const { return static_cast<int>(value_names.size()); }
};

struct NodeSpec {
  int variable = -1;
  std::vector<int> parents;
  std::map<int, Eigen::VectorXd> numeric_rows;            // parent config -> distribution
  std::map<std::pair<int, int>, Interval> interval_rows;  // (value j, config k) -> bounds
  std::vector<QualitativeRelation> relations;
  bool qualitative = false;  // declared free even without relations
  std::map<int, IdmRow> idm_rows;
  std::map<int, Eigen::VectorXd> tau_rows;  // prior means consumed by IDM learning

  bool has_numeric(int k) const { return numeric_rows.count(k) != 0; }
  bool has_interval_at(int k) const;
  bool is_idm() const { return !idm_rows.empty(); }
};

struct LogicAssessment {
  std::string formula;  // grammar: identifiers, '&', '|', '!', parentheses
  std::map<std::string, std::string> condition;
  double alpha = 1.0;
};

/// Directed network over discrete variables. Immutable once built; all
/// operations in the library take it by const reference and never mutate it.
struct Network {
  std::vector<Variable> variables;
  std::vector<NodeSpec> nodes;
  std::vector<LogicAssessment> logic_assessments;

  int add_variable(const std::string& name, std::vector<std::string> values);
  int variable_index(const std::string& name) const;  // -1 when absent
  const Variable& var(int id) const { return variables[static_cast<size_t>(id)]; }
  NodeSpec& node(int id) { return nodes[static_cast<size_t>(id)]; }
  const NodeSpec& node(int id) const { return nodes[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(variables.size()); }

  /// Number of parent configurations of node `id` (product of parent cardinalities).
  int family_config_count(int id) const;
  /// Mixed-radix rank of a parent-value tuple; the first parent is most significant.
  int parent_config_index(int id, const std::vector<int>& parent_values) const;
  std::vector<int> parent_config_values(int id, int config) const;
  bool fully_numeric() const;
};

using Evidence = std::map<int, int>;  // variable id -> observed value index

struct Query {
  int variable = -1;
  int value = 0;
  Evidence evidence;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string str() const;
};

/// Collects every structural problem in the network instead of stopping at the
/// first one. A network with an empty report is safe for all other operations.
ValidationReport validate_network(const Network& net);

/// Parents-before-children order; throws ValidationError on a cycle.
std::vector<int> topological_order(const Network& net);

}  // namespace sqpn
