#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>

#include "doctest.h"
#include "sqpn/compile.hpp"
#include "sqpn/errors.hpp"
#include "sqpn/oracle.hpp"
#include "sqpn/solver.hpp"
#include "support/random_nets.hpp"

using namespace sqpn;

namespace {

Eigen::VectorXd row2(double p) {
  Eigen::VectorXd r(2);
  r << p, 1.0 - p;
  return r;
}

Network numeric_chain() {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  int b = net.add_variable("B", {"b", "~b"});
  net.node(a).numeric_rows[0] = row2(0.5);
  net.node(b).parents = {a};
  net.node(b).numeric_rows[0] = row2(0.8);
  net.node(b).numeric_rows[1] = row2(0.2);
  return net;
}

Network chain3() {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  int b = net.add_variable("B", {"b", "~b"});
  int c = net.add_variable("C", {"c", "~c"});
  net.node(a).numeric_rows[0] = row2(0.5);
  net.node(b).parents = {a};
  net.node(b).numeric_rows[0] = row2(0.8);
  net.node(b).numeric_rows[1] = row2(0.2);
  net.node(c).parents = {b};
  net.node(c).numeric_rows[0] = row2(0.7);
  net.node(c).numeric_rows[1] = row2(0.1);
  return net;
}

}  // namespace

TEST_CASE("elimination order on a chain") {
  Network net = chain3();
  std::vector<int> order = elimination_order(net, {2}, {});
  CHECK(order == std::vector<int>{0, 1});
  CHECK(elimination_order(net, {2}, {}) == order);  // deterministic

  Network single;
  single.add_variable("A", {"a", "~a"});
  single.node(0).numeric_rows[0] = row2(0.5);
  CHECK(elimination_order(single, {0}, {}).empty());
}

TEST_CASE("symbolic elimination of a numeric chain pins the message at 0.5") {
  Network net = numeric_chain();
  ConstraintSet cs = compile_parameter_space(net);
  std::vector<Definition> defs;
  VeTable table = symbolic_ve(net, {1}, {}, cs, defs);
  REQUIRE(table.cells.size() == 2);
  const Interval& box = cs.box(table.cells[0]);
  CHECK(box.lo == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(box.hi == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("free parameter flows into the message definition with interval box") {
  Network net = numeric_chain();
  net.node(1).numeric_rows.erase(0);  // theta_{b|a} becomes free
  net.node(1).qualitative = true;
  ConstraintSet cs = compile_parameter_space(net);
  std::vector<Definition> defs;
  VeTable table = symbolic_ve(net, {1}, {}, cs, defs);
  // m_b = 0.5 theta_{b|a} + 0.1, interval arithmetic gives [0.1, 0.6]
  const Interval& box = cs.box(table.cells[0]);
  CHECK(box.lo == doctest::Approx(0.1));
  CHECK(box.hi == doctest::Approx(0.6));

  int theta = cs.theta(1, 0, 0);
  bool found = false;
  for (const auto& c : cs.constraints) {
    if (c.defined_var != table.cells[0]) continue;
    for (const auto& m : c.terms)
      if (m.vars.size() == 1 && m.vars[0] == theta && std::abs(std::abs(m.coeff) - 0.5) < 1e-12)
        found = true;
  }
  CHECK(found);
}

TEST_CASE("substitution soundness: swept messages reproduce exact marginals") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Network net = testsupport::random_numeric_net(seed, 12);
    testsupport::Rng rng(seed * 13);
    Query q = testsupport::random_query(net, rng, false);
    MultilinearProgram p = pose_marginal_query(net, q.variable, q.value);
    Eigen::VectorXd x(p.cs.vars.size());
    for (const auto& v : p.cs.vars) x[v.id] = v.box.lo;
    sweep_definitions(p, x);
    double value = evaluate_objective(p, x);
    CHECK(value == doctest::Approx(numeric_ve(net, q)).epsilon(1e-9));
    CHECK(max_violation(p, x) < 1e-9);
  }
}

TEST_CASE("degree of every monomial after decomposition is at most two") {
  for (std::uint64_t seed : {3u, 7u, 19u}) {
    Network net = testsupport::random_mixed_sqpn(seed);
    testsupport::Rng rng(seed);
    Query q = testsupport::random_query(net, rng);
    MultilinearProgram p = q.evidence.empty()
                               ? pose_marginal_query(net, q.variable, q.value)
                               : pose_influence_query(net, q);
    for (const auto& c : p.cs.constraints)
      for (const auto& m : c.terms) CHECK(m.degree() <= 2);
    for (const auto& m : p.objective) CHECK(m.degree() <= 2);
  }
}

TEST_CASE("program size grows linearly along chains") {
  auto constraints_for_chain = [](int length) {
    Network net;
    for (int i = 0; i < length; ++i) {
      std::string name = "V" + std::to_string(i);
      net.add_variable(name, {name + "1", name + "0"});
      if (i > 0) net.node(i).parents = {i - 1};
    }
    net.node(0).numeric_rows[0] = row2(0.5);
    for (int i = 1; i < length; ++i) {
      net.node(i).numeric_rows[0] = row2(0.8);
      net.node(i).numeric_rows[1] = row2(0.3);
    }
    ConstraintSet cs = compile_parameter_space(net);
    std::vector<Definition> defs;
    VeStats stats;
    symbolic_ve(net, {length - 1}, {}, cs, defs, &stats);
    long total_configs = 0;
    for (long c : stats.bucket_configs) total_configs += c;
    CHECK(stats.constraints <= 4 * total_configs);
    return stats.constraints;
  };
  long c4 = constraints_for_chain(4);
  long c10 = constraints_for_chain(10);
  long c16 = constraints_for_chain(16);
  CHECK(c10 - c4 == c16 - c10);  // equal length steps, equal growth
}

TEST_CASE("influence of the parent in the numeric chain is exactly 0.3") {
  Network net = numeric_chain();
  Query q{1, 0, {{0, 0}}};
  MultilinearProgram p = pose_influence_query(net, q);
  SolverOptions opt;
  SolveResult lo = solve(p, Sense::minimize, opt);
  SolveResult hi = solve(p, Sense::maximize, opt);
  CHECK(lo.bound == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(hi.bound == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(lo.status == SolveStatus::converged);
}

TEST_CASE("positive influence with a free child: bounds are [0, 0.5]") {
  Network net;
  int y = net.add_variable("Y", {"y", "~y"});
  int x = net.add_variable("X", {"x", "~x"});
  net.node(y).numeric_rows[0] = row2(0.5);
  net.node(x).parents = {y};
  QualitativeRelation rel;
  rel.kind = RelationKind::influence;
  rel.sign = Sign::positive;
  rel.sources = {y};
  net.node(x).relations.push_back(rel);

  Query q{x, 0, {{y, 0}}};
  MultilinearProgram p = pose_influence_query(net, q);
  SolverOptions opt;
  opt.gap_tol = 1e-6;
  SolveResult lo = solve(p, Sense::minimize, opt);
  SolveResult hi = solve(p, Sense::maximize, opt);
  CHECK(lo.bound == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(std::abs(lo.bound) < 1e-5);
  CHECK(hi.bound == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("marginal of the numeric chain is exactly one half") {
  Network net = numeric_chain();
  MultilinearProgram p = pose_marginal_query(net, 1, 0);
  SolveResult lo = solve(p, Sense::minimize, {});
  SolveResult hi = solve(p, Sense::maximize, {});
  CHECK(lo.bound == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(hi.bound == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("marginal of a boxed free root is its box") {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  net.node(a).qualitative = true;
  net.node(a).interval_rows[{0, 0}] = {0.2, 0.8};
  MultilinearProgram p = pose_marginal_query(net, a, 0);
  SolveResult lo = solve(p, Sense::minimize, {});
  SolveResult hi = solve(p, Sense::maximize, {});
  CHECK(lo.bound == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(hi.bound == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("gadget identity: the conditional is one half at every feasible point") {
  auto [net, query] = build_emajsat_gadget(parse_formula("X1 | X2"), 1);
  MultilinearProgram p = pose_influence_query(net, query);
  // the conditional leg of the objective (first monomial) is pinned at 1/2
  REQUIRE(p.objective.size() == 2);
  int conditional = p.objective[0].vars[0];
  CHECK(p.cs.box(conditional).lo == doctest::Approx(0.5));
  CHECK(p.cs.box(conditional).hi == doctest::Approx(0.5));
}

TEST_CASE("impossible evidence is detected at pose time") {
  Network net = numeric_chain();
  net.node(0).numeric_rows[0] = row2(1.0);  // P(~a) = 0
  Query q{1, 0, {{0, 1}}};
  CHECK_THROWS_AS(pose_influence_query(net, q), EvidenceImpossibleError);
}

TEST_CASE("logic assessment on a free root pins its parameter") {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  net.node(a).qualitative = true;
  net.logic_assessments.push_back({"A", {}, 0.3});
  MultilinearProgram p = pose_marginal_query(net, a, 0);
  SolveResult lo = solve(p, Sense::minimize, {});
  SolveResult hi = solve(p, Sense::maximize, {});
  CHECK(lo.bound == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(hi.bound == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("tautological assessment changes nothing, bit for bit") {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  int b = net.add_variable("B", {"b", "~b"});
  net.node(a).qualitative = true;
  net.node(b).parents = {a};
  net.node(b).numeric_rows[0] = row2(0.9);
  net.node(b).numeric_rows[1] = row2(0.2);

  MultilinearProgram base = pose_marginal_query(net, b, 0);
  net.logic_assessments.push_back({"A | !A", {}, 1.0});
  MultilinearProgram with = pose_marginal_query(net, b, 0);
  CHECK(dump_program(base) == dump_program(with));

  SolveResult lo1 = solve(base, Sense::minimize, {});
  SolveResult lo2 = solve(with, Sense::minimize, {});
  CHECK(lo1.bound == lo2.bound);
  CHECK(lo1.nodes == lo2.nodes);
}

TEST_CASE("disjunction assessment over two free roots admits the symmetric point") {
  Network net;
  int a = net.add_variable("A", {"a", "~a"});
  int b = net.add_variable("B", {"b", "~b"});
  net.node(a).qualitative = true;
  net.node(b).qualitative = true;
  net.logic_assessments.push_back({"A | B", {}, 0.75});
  MultilinearProgram p = pose_marginal_query(net, a, 0);

  // theta_a + theta_b - theta_a theta_b = 0.75 holds at (0.5, 0.5)
  Eigen::VectorXd x(p.cs.vars.size());
  for (const auto& v : p.cs.vars) x[v.id] = v.box.lo;
  x[p.cs.theta(a, 0, 0)] = 0.5;
  x[p.cs.theta(a, 1, 0)] = 0.5;
  x[p.cs.theta(b, 0, 0)] = 0.5;
  x[p.cs.theta(b, 1, 0)] = 0.5;
  sweep_definitions(p, x);
  CHECK(max_violation(p, x) < 1e-9);

  // and a point violating the assessment is flagged
  x[p.cs.theta(a, 0, 0)] = 0.1;
  x[p.cs.theta(a, 1, 0)] = 0.9;
  sweep_definitions(p, x);
  CHECK(max_violation(p, x) > 1e-3);
}

TEST_CASE("conditional logic assessment multiplies through, no division") {
  Network net;
  int c = net.add_variable("C", {"c", "~c"});
  int a = net.add_variable("A", {"a", "~a"});
  net.node(c).numeric_rows[0] = row2(0.4);
  net.node(a).parents = {c};
  net.node(a).qualitative = true;
  ConstraintSet cs = compile_logic_assessment(net, parse_formula("A"), {{c, 0}}, 0.6);
  bool found = false;
  for (const auto& con : cs.constraints)
    if (con.group == ConstraintGroup::logic) {
      found = true;
      CHECK(con.cmp == Cmp::eq);
      for (const auto& m : con.terms) CHECK(m.degree() <= 2);
    }
  CHECK(found);
}

TEST_CASE("sign classification follows the min/max pattern") {
  CHECK(classify_sign(0.1, 0.3, 1e-6) == Sign::positive);
  CHECK(classify_sign(-0.2, 0.3, 1e-6) == Sign::ambiguous);
  CHECK(classify_sign(0.0, 0.0, 1e-6) == Sign::zero);
  CHECK(classify_sign(-0.3, -0.1, 1e-6) == Sign::negative);
  CHECK(classify_sign(-0.3, 0.0, 1e-6) == Sign::negative);
  CHECK(classify_sign(-1e-9, 1e-9, 1e-6) == Sign::zero);
}

TEST_CASE("program dump uses the canonical variable grammar") {
  Network net = numeric_chain();
  net.node(1).numeric_rows.erase(0);
  net.node(1).qualitative = true;
  MultilinearProgram p = pose_marginal_query(net, 1, 0);
  std::string dump = dump_program(p);
  CHECK(dump.find("theta[1][0][0]") != std::string::npos);
  CHECK(dump.find("m[") != std::string::npos);
  CHECK(dump.find("objective:") != std::string::npos);
  CHECK(dump.find("subject to") != std::string::npos);
  CHECK(dump.find("bounds") != std::string::npos);
}
