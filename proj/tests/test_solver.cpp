#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "sqpn/compile.hpp"
#include "sqpn/errors.hpp"
#include "sqpn/data.hpp"
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

// two free variables u, v on the unit box with the product w = u * v
MultilinearProgram toy_product_program() {
  MultilinearProgram p;
  int u = p.cs.add_var(VarRole::theta, 0, 0, 0, {0.0, 1.0});
  int v = p.cs.add_var(VarRole::theta, 0, 1, 0, {0.0, 1.0});
  MultilinearConstraint norm;
  norm.group = ConstraintGroup::normalization;
  norm.cmp = Cmp::eq;
  norm.rhs = 1.0;
  norm.terms = {{1.0, {u}}, {1.0, {v}}};
  p.cs.add_constraint(norm);
  p.rows.push_back({0, 0, VarRole::theta, {u, v}});
  p.primal = {u, v};
  p.objective = {{1.0, {u, v}}};
  return p;
}

}  // namespace

TEST_CASE("unit-box envelope matches the four standard inequalities") {
  MultilinearProgram p = toy_product_program();
  Box box = initial_box(p);
  Relaxation rel = relax_mccormick(p, box);
  REQUIRE(rel.products.size() == 1);
  // w >= 0, w >= u + v - 1, w <= u, w <= v at a few witness points
  int w = rel.products[0].col;
  int cu = rel.var_col[0], cv = rel.var_col[1];
  auto envelope_ok = [&](double uu, double vv, double ww) {
    for (const auto& row : rel.lp.rows) {
      double act = 0.0;
      for (const auto& [c, a] : row.coeffs) {
        if (c == w) act += a * ww;
        else if (c == cu) act += a * uu;
        else if (c == cv) act += a * vv;
      }
      if (act < row.lo - 1e-12 || act > row.hi + 1e-12) return false;
    }
    return true;
  };
  CHECK(envelope_ok(0.5, 0.5, 0.25));   // the true product is always inside
  CHECK(envelope_ok(0.5, 0.5, 0.0));    // w >= u + v - 1 = 0 allows w = 0 here
  CHECK_FALSE(envelope_ok(0.5, 0.5, 0.6));  // w <= u fails
  CHECK_FALSE(envelope_ok(0.9, 0.9, 0.7));  // w >= u + v - 1 = 0.8 fails
}

TEST_CASE("degenerate factor collapses the envelope to a line") {
  MultilinearProgram p = toy_product_program();
  p.cs.constraints.clear();  // no normalization; u pinned by its box
  p.rows.clear();
  Box box = initial_box(p);
  box[0] = {0.5, 0.5};
  Relaxation rel = relax_mccormick(p, box);
  // with u folded the objective is 0.5 * v: maximum 0.5 at v = 1
  LPResult hi = lp_solve(rel.lp);
  REQUIRE(hi.status == LPStatus::optimal);
  CHECK(hi.value + rel.obj_offset == doctest::Approx(0.5));
}

TEST_CASE("envelope gap at the midpoint equals range product over four") {
  // u in [0.2, 0.8], v in [0.3, 0.7]: distance from the true product to each
  // envelope at the midpoint is (0.8 - 0.2) * (0.7 - 0.3) / 4 = 0.06
  double ulo = 0.2, uhi = 0.8, vlo = 0.3, vhi = 0.7;
  double u = 0.5, v = 0.5;
  double under = std::max(vlo * u + ulo * v - ulo * vlo, vhi * u + uhi * v - uhi * vhi);
  double over = std::min(vhi * u + ulo * v - ulo * vhi, vlo * u + uhi * v - uhi * vlo);
  CHECK(u * v - under == doctest::Approx(0.06));
  CHECK(over - u * v == doctest::Approx(0.06));
}

TEST_CASE("am-gm toy: max of u*v on the simplex is one quarter") {
  MultilinearProgram p = toy_product_program();
  SolverOptions opt;
  opt.gap_tol = 1e-6;
  SolveResult hi = solve(p, Sense::maximize, opt);
  CHECK(hi.status == SolveStatus::converged);
  CHECK(hi.bound == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(hi.incumbent == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(hi.point[0] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("fully numeric program converges at the root with zero gap") {
  Network net = testsupport::random_numeric_net(17, 10);
  testsupport::Rng rng(17);
  Query q = testsupport::random_query(net, rng);
  MultilinearProgram p = pose_influence_query(net, q);
  SolveResult lo = solve(p, Sense::minimize, {});
  SolveResult hi = solve(p, Sense::maximize, {});
  CHECK(lo.status == SolveStatus::converged);
  CHECK(lo.nodes == 1);
  CHECK(lo.gap < 1e-6);
  double exact = numeric_influence(net, q);
  CHECK(lo.bound == doctest::Approx(exact).epsilon(1e-6));
  CHECK(hi.bound == doctest::Approx(exact).epsilon(1e-6));
}

TEST_CASE("local refinement: feasible optimum is a fixed point") {
  MultilinearProgram p = toy_product_program();
  Eigen::VectorXd start(2);
  start << 0.5, 0.5;
  auto refined = local_refine(p, Sense::maximize, start, {});
  REQUIRE(refined.has_value());
  CHECK((*refined)[0] == doctest::Approx(0.5));
  CHECK((*refined)[1] == doctest::Approx(0.5));
}

TEST_CASE("local refinement renormalizes scaled rows") {
  MultilinearProgram p = toy_product_program();
  p.objective = {{1.0, {0}}};  // keep the refined point where projection puts it
  Eigen::VectorXd start(2);
  start << 0.7, 0.5;  // sums to 1.2
  SolverOptions opt;
  opt.refine_iters = 0;  // projection only
  auto refined = local_refine(p, Sense::minimize, start, opt);
  REQUIRE(refined.has_value());
  CHECK(((*refined)[0] + (*refined)[1]) == doctest::Approx(1.0).epsilon(1e-9));
  // euclidean projection onto the simplex shifts both coordinates equally
  CHECK((*refined)[0] == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("most random starts reach feasibility on the example4 constraint set") {
  Network net = load_network_file(std::string(SQPN_FIXTURES) + "/example4.net");
  MultilinearProgram p = pose_marginal_query(net, net.variable_index("X"), 0);
  testsupport::Rng rng(404);
  int feasible = 0;
  SolverOptions opt;
  for (int s = 0; s < 100; ++s) {
    Eigen::VectorXd start(p.cs.vars.size());
    for (const auto& v : p.cs.vars) start[v.id] = v.box.lo + rng.uniform() * v.box.width();
    if (local_refine(p, Sense::maximize, start, opt)) ++feasible;
  }
  CHECK(feasible >= 90);
}

TEST_CASE("soundness: sampled feasible points lie inside the certified interval") {
  int tested = 0;
  for (std::uint64_t seed = 30; seed < 60 && tested < 12; ++seed) {
    Network net = testsupport::random_mixed_sqpn(seed);
    FreeParams params = free_parameters(net);
    if (params.free_count() > 6) continue;
    testsupport::Rng rng(seed * 3 + 1);
    Query q = testsupport::random_query(net, rng);
    if (q.evidence.empty()) continue;
    auto samples = sample_feasible(net, params, 25, seed, 40000);
    if (samples.empty()) continue;
    ++tested;

    MultilinearProgram p = pose_influence_query(net, q);
    SolverOptions opt;
    opt.gap_tol = 2e-3;
    SolveResult lo = solve(p, Sense::minimize, opt);
    SolveResult hi = solve(p, Sense::maximize, opt);
    for (const auto& point : samples) {
      Network materialized = materialize_network(net, params, point);
      double value;
      try {
        value = numeric_influence(materialized, q);
      } catch (const Error&) {
        continue;
      }
      CHECK(value >= lo.bound - 1e-6);
      CHECK(value <= hi.bound + 1e-6);
    }
  }
  CHECK(tested >= 8);
}

TEST_CASE("relaxation dominance: the root bound contains the true optimum") {
  for (std::uint64_t seed : {31u, 44u, 59u}) {
    Network net = testsupport::random_mixed_sqpn(seed);
    FreeParams params = free_parameters(net);
    testsupport::Rng rng(seed + 5);
    Query q = testsupport::random_query(net, rng);
    if (q.evidence.empty()) continue;
    MultilinearProgram p = pose_influence_query(net, q);
    Box box = initial_box(p);
    REQUIRE(propagate_boxes(p, box));
    Relaxation rel = relax_mccormick(p, box);
    rel.lp.objective.assign(rel.lp.objective.size(), 0.0);
    // rebuild objective for max sense
    Relaxation fresh = relax_mccormick(p, box);
    LPResult root = lp_solve(fresh.lp);
    REQUIRE(root.status == LPStatus::optimal);
    Interval truth = grid_bounds(net, q, QueryKind::influence, GridSpec{0.05, 2});
    CHECK(root.value + fresh.obj_offset >= truth.hi - 1e-7);
  }
}

TEST_CASE("anytime: bound sequence is monotone and the gap closes") {
  Network net = load_network_file(std::string(SQPN_FIXTURES) + "/example4.net");
  Query q{net.variable_index("X"), 0, {{net.variable_index("Y"), 0}}};
  MultilinearProgram p = pose_influence_query(net, q);
  SolverOptions opt;
  opt.gap_tol = 1e-5;
  double last_bound = std::numeric_limits<double>::infinity();
  bool monotone = true;
  SolveResult hi = solve(p, Sense::maximize, opt, [&](long, double b, double, double) {
    if (b > last_bound + 1e-12) monotone = false;
    last_bound = b;
  });
  CHECK(monotone);
  CHECK(hi.status == SolveStatus::converged);
  CHECK(hi.gap <= opt.gap_tol);
  CHECK(hi.incumbent <= hi.bound + 1e-9);
}

TEST_CASE("identical inputs and options give identical results") {
  Network net = load_network_file(std::string(SQPN_FIXTURES) + "/example4.net");
  Query q{net.variable_index("X"), 0, {{net.variable_index("Z"), 0}}};
  MultilinearProgram p = pose_influence_query(net, q);
  SolverOptions opt;
  opt.gap_tol = 1e-3;
  SolveResult a = solve(p, Sense::maximize, opt);
  SolveResult b = solve(p, Sense::maximize, opt);
  CHECK(a.bound == b.bound);
  CHECK(a.incumbent == b.incumbent);
  CHECK(a.nodes == b.nodes);
}

TEST_CASE("adding a constraint never widens the interval") {
  for (std::uint64_t seed : {5u, 9u, 21u}) {
    Network net = testsupport::random_mixed_sqpn(seed);
    // find a qualitative node with at least one parent to constrain further
    int target = -1;
    for (const auto& spec : net.nodes)
      if (spec.qualitative && !spec.parents.empty()) target = spec.variable;
    if (target < 0) continue;
    testsupport::Rng rng(seed + 99);
    Query q = testsupport::random_query(net, rng);
    if (q.evidence.empty()) continue;

    SolverOptions opt;
    opt.gap_tol = 1e-5;
    MultilinearProgram base = pose_influence_query(net, q);
    SolveResult lo1 = solve(base, Sense::minimize, opt);
    SolveResult hi1 = solve(base, Sense::maximize, opt);

    QualitativeRelation extra;
    extra.kind = RelationKind::influence;
    extra.sign = Sign::zero;  // strong tightening, always feasible
    extra.sources = {net.node(target).parents[0]};
    net.node(target).relations.push_back(extra);
    MultilinearProgram tight = pose_influence_query(net, q);
    SolveResult lo2 = solve(tight, Sense::minimize, opt);
    SolveResult hi2 = solve(tight, Sense::maximize, opt);
    CHECK(lo2.bound >= lo1.bound - 3e-5);
    CHECK(hi2.bound <= hi1.bound + 3e-5);
  }
}

TEST_CASE("infeasible programs are reported as such") {
  Network net;
  int y = net.add_variable("Y", {"y", "~y"});
  int x = net.add_variable("X", {"x", "~x"});
  net.node(y).numeric_rows[0] = row2(0.5);
  net.node(x).parents = {y};
  QualitativeRelation strong;
  strong.kind = RelationKind::strong;
  strong.sign = Sign::positive;
  strong.sources = {y};
  strong.delta = 0.6;
  QualitativeRelation weak = strong;
  weak.kind = RelationKind::weak;
  weak.delta = 0.2;  // difference must be >= 0.6 and <= 0.2 at once
  net.node(x).relations = {strong, weak};
  MultilinearProgram p = pose_marginal_query(net, x, 0);
  SolveResult res = solve(p, Sense::maximize, {});
  CHECK(res.status == SolveStatus::infeasible);
}
