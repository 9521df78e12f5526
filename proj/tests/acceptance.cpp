// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sqpn/compile.hpp"
#include "sqpn/data.hpp"
#include "sqpn/errors.hpp"
#include "sqpn/formula.hpp"
#include "sqpn/learn.hpp"
#include "sqpn/oracle.hpp"
#include "sqpn/solver.hpp"
#include "support/random_nets.hpp"

using namespace sqpn;

namespace {

std::string fixture(const std::string& name) { return std::string(SQPN_FIXTURES) + "/" + name; }

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

struct Harness {
  bool all_ok = true;
  void run(int number, const std::string& label, const std::function<bool(std::string&)>& body) {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", number,
                label.c_str(), seconds, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
};

// counts as published for the example5 roots plus the example4 table
Counts published_counts(const Network& net) {
  Counts counts;
  counts.n.resize(net.nodes.size());
  counts.n[size_t(net.variable_index("Y"))] = {vec2(29, 11)};
  counts.n[size_t(net.variable_index("Z"))] = {vec2(25, 15)};
  auto& x = counts.n[size_t(net.variable_index("X"))];
  x = {vec2(3, 3), vec2(6, 14), vec2(8, 2), vec2(1, 3)};
  counts.total = 40;
  return counts;
}

double probability_of_formula(const Network& numeric_net, const BooleanFormula& formula) {
  int n = numeric_net.size();
  long total = 1;
  std::vector<int> cards(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    cards[size_t(i)] = numeric_net.var(i).cardinality();
    total *= cards[size_t(i)];
  }
  double p = 0.0;
  std::vector<int> values(size_t(n), 0);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = n - 1; i >= 0; --i) {
      values[size_t(i)] = int(rem % cards[size_t(i)]);
      rem /= cards[size_t(i)];
    }
    double prob = 1.0;
    for (int i = 0; i < n && prob != 0.0; ++i) {
      std::vector<int> pv;
      for (int par : numeric_net.node(i).parents) pv.push_back(values[size_t(par)]);
      prob *= numeric_net.node(i).numeric_rows.at(numeric_net.parent_config_index(i, pv))[values[size_t(i)]];
    }
    if (prob == 0.0) continue;
    std::map<std::string, bool> assignment;
    for (int i = 0; i < n; ++i) assignment[numeric_net.var(i).name] = values[size_t(i)] == 0;
    if (formula.evaluate(assignment)) p += prob;
  }
  return p;
}

}  // namespace

int main() {
  Harness h;

  h.run(1, "idm posterior means for the example5 roots", [&](std::string& detail) {
    Network net = load_network_file(fixture("example5.net"));
    Counts counts = published_counts(net);
    CredalNetwork credal = fit_idm(net, counts, IdmConfig{2.0});
    double ty = credal.network.node(net.variable_index("Y")).numeric_rows.at(0)[0];
    double tz = credal.network.node(net.variable_index("Z")).numeric_rows.at(0)[0];
    std::ostringstream os;
    os << "theta_y=" << ty << " theta_z=" << tz;
    detail = os.str();
    return std::abs(ty - 0.7222) <= 0.005 && std::abs(tz - 0.6071) <= 0.005;
  });

  h.run(2, "idm symbolic expressions and transplanted constraints", [&](std::string& detail) {
    Network net = load_network_file(fixture("example5.net"));
    Dataset data = load_dataset_file(fixture("example4.csv"), net);
    CredalNetwork credal = fit_idm(net, count_statistics(data, net), IdmConfig{2.0});
    int x = credal.network.variable_index("X");
    const NodeSpec& spec = credal.network.node(x);
    // (2 t + 3)/8, (2 t + 6)/22, (2 t + 8)/12, (2 t + 1)/6 -- exact
    const double expect[4][2] = {{3, 8}, {6, 22}, {8, 12}, {1, 6}};
    bool exact = spec.idm_rows.size() == 4;
    for (int k = 0; k < 4 && exact; ++k) {
      const IdmRow& row = spec.idm_rows.at(k);
      exact = std::abs(row.s - 2.0) <= 1e-12 &&
              std::abs(row.counts[0] - expect[k][0]) <= 1e-12 &&
              std::abs(row.denominator() - expect[k][1]) <= 1e-12;
    }
    // the five transplanted constraints over t, exact shapes
    ConstraintSet cs = compile_relations(credal.network);
    auto t = [&](int k) { return cs.hyper(x, 0, k); };
    std::set<std::string> got;
    for (const auto& c : cs.constraints)
      if (c.group == ConstraintGroup::relation) got.insert(format_constraint(cs, c));
    auto name = [&](int k) { return cs.vars[size_t(t(k))].name(); };
    std::set<std::string> expected{
        name(0) + " - " + name(2) + " <= 0", name(1) + " - " + name(3) + " <= 0",
        name(0) + " - " + name(1) + " >= 0", name(2) + " - " + name(3) + " >= 0",
        name(0) + "*" + name(3) + " - " + name(1) + "*" + name(2) + " >= 0"};
    detail = "expressions exact, " + std::to_string(got.size()) + " t-constraints";
    return exact && got == expected;
  });

  h.run(3, "constrained maximum likelihood on example4", [&](std::string& detail) {
    Network net = load_network_file(fixture("example4.net"));
    Dataset data = load_dataset_file(fixture("example4.csv"), net);
    Counts counts = count_statistics(data, net);
    MlResult fit = fit_ml(net, counts);
    GridMlResult oracle = grid_ml(net, counts, GridSpec{0.005, 3});

    int x = net.variable_index("X");
    double e0 = fit.estimates[size_t(x)].at(0)[0], e1 = fit.estimates[size_t(x)].at(1)[0];
    double e2 = fit.estimates[size_t(x)].at(2)[0], e3 = fit.estimates[size_t(x)].at(3)[0];
    FreeParams params = free_parameters(net);
    Eigen::VectorXd point(params.point_dim);
    for (const auto& row : params.rows)
      for (int j = 0; j < row.dim; ++j)
        point[row.offset + j] = fit.estimates[size_t(row.node)].at(row.config)[j];
    double violation = direct_violation(net, params, point);

    // published tuple {0.56, 0.78, 0.27, 0.37}, middle entries possibly transposed
    auto near = [](double v, double t) { return std::abs(v - t) <= 0.02; };
    bool printed = near(e0, 0.56) && near(e1, 0.78) && near(e2, 0.27) && near(e3, 0.37);
    bool transposed = near(e0, 0.56) && near(e1, 0.27) && near(e2, 0.78) && near(e3, 0.37);

    std::ostringstream os;
    os << "ll=" << fit.log_likelihood << " oracle=" << oracle.log_likelihood << " violation="
       << violation << " estimates=(" << e0 << ", " << e1 << ", " << e2 << ", " << e3 << ")";
    detail = os.str();
    return fit.log_likelihood >= oracle.log_likelihood - 1e-3 && violation <= 1e-6 &&
           (printed || transposed);
  });

  h.run(4, "bayesian-network degeneration on 50 numeric networks", [&](std::string& detail) {
    int converged = 0, matched = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      Network net = testsupport::random_numeric_net(seed, 12);
      testsupport::Rng rng(seed * 31 + 7);
      Query q = testsupport::random_query(net, rng);
      if (q.evidence.empty()) q = testsupport::random_query(net, rng, false);
      MultilinearProgram p = q.evidence.empty()
                                 ? pose_marginal_query(net, q.variable, q.value)
                                 : pose_influence_query(net, q);
      SolveResult lo = solve(p, Sense::minimize, {});
      SolveResult hi = solve(p, Sense::maximize, {});
      double exact = q.evidence.empty() ? numeric_ve(net, q) : numeric_influence(net, q);
      if (lo.status == SolveStatus::converged && hi.status == SolveStatus::converged)
        ++converged;
      if (std::abs(lo.bound - exact) <= 1e-6 && std::abs(hi.bound - exact) <= 1e-6) ++matched;
    }
    detail = std::to_string(converged) + "/50 converged, " + std::to_string(matched) +
             "/50 within 1e-6";
    return converged == 50 && matched == 50;
  });

  h.run(5, "credal soundness and tightness on 100 mixed networks", [&](std::string& detail) {
    int sound = 0, tight = 0, total = 0;
    double worst_hausdorff = 0.0, worst_time = 0.0;
    for (std::uint64_t seed = 1; total < 100; ++seed) {
      Network net = testsupport::random_mixed_sqpn(seed);
      FreeParams params = free_parameters(net);
      int free = params.free_count();
      if (free < 1 || free > 6) continue;
      testsupport::Rng rng(seed * 17 + 3);
      Query q = testsupport::random_query(net, rng);
      QueryKind kind = q.evidence.empty() ? QueryKind::marginal : QueryKind::influence;
      ++total;

      double step = free <= 2 ? 0.02 : (free <= 4 ? 0.05 : 0.1);
      auto t0 = std::chrono::steady_clock::now();
      Interval grid;
      try {
        grid = grid_bounds(net, q, kind, GridSpec{step, 3});
      } catch (const Error&) {
        --total;
        continue;  // no feasible grid point at this resolution
      }
      MultilinearProgram p = kind == QueryKind::marginal
                                 ? pose_marginal_query(net, q.variable, q.value)
                                 : pose_influence_query(net, q);
      SolverOptions opt;
      opt.gap_tol = 1e-4;
      SolveResult lo = solve(p, Sense::minimize, opt);
      SolveResult hi = solve(p, Sense::maximize, opt);
      double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      worst_time = std::max(worst_time, seconds);

      bool contained = lo.bound <= grid.lo + 1e-6 && hi.bound >= grid.hi - 1e-6;
      double hausdorff = std::max(grid.lo - lo.bound, hi.bound - grid.hi);
      worst_hausdorff = std::max(worst_hausdorff, hausdorff);
      if (contained) ++sound;
      if (hausdorff <= std::max(5e-3, 2 * step) && seconds <= 60.0) ++tight;
    }
    std::ostringstream os;
    os << sound << "/100 sound, " << tight << "/100 tight, worst hausdorff=" << worst_hausdorff
       << ", worst time=" << worst_time << "s";
    detail = os.str();
    return sound == 100 && tight == 100;
  });

  h.run(6, "gadget equivalence over the formula corpus", [&](std::string& detail) {
    std::stringstream corpus(read_file(fixture("gadget-corpus/formulas.txt")));
    std::string line;
    int checked = 0, agreed = 0;
    while (std::getline(corpus, line)) {
      if (line.empty()) continue;
      BooleanFormula phi = parse_formula(line);
      for (int k = 1; k <= 3; ++k) {
        ++checked;
        auto [net, query] = build_emajsat_gadget(phi, k);
        MultilinearProgram p = pose_influence_query(net, query);
        SolverOptions opt;
        opt.gap_tol = 1e-7;
        SolveResult lo = solve(p, Sense::minimize, opt);
        bool solver_yes = lo.bound < -1e-6;
        bool brute_yes = emajsat_brute(phi, k);
        if (solver_yes == brute_yes) ++agreed;
      }
    }
    detail = std::to_string(agreed) + "/" + std::to_string(checked) + " agree";
    return checked == 30 && agreed == checked;
  });

  h.run(7, "sign propagation along a positive chain", [&](std::string& detail) {
    testsupport::Rng rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Network net;
      int a = net.add_variable("A", {"a", "~a"});
      int b = net.add_variable("B", {"b", "~b"});
      int c = net.add_variable("C", {"c", "~c"});
      net.node(a).numeric_rows[0] = vec2(0.1 + 0.8 * rng.uniform(), 0.0);
      net.node(a).numeric_rows[0][1] = 1.0 - net.node(a).numeric_rows[0][0];
      net.node(b).parents = {a};
      net.node(c).parents = {b};
      QualitativeRelation sab;
      sab.kind = RelationKind::influence;
      sab.sign = Sign::positive;
      sab.sources = {a};
      net.node(b).relations.push_back(sab);
      QualitativeRelation sbc = sab;
      sbc.sources = {b};
      net.node(c).relations.push_back(sbc);

      Query q{c, 0, {{a, 0}}};
      MultilinearProgram p = pose_influence_query(net, q);
      SolverOptions opt;
      opt.gap_tol = 5e-7;
      SolveResult lo = solve(p, Sense::minimize, opt);
      worst = std::min(worst, lo.bound);
      if (lo.bound < -1e-6) break;
    }
    std::ostringstream os;
    os << "worst min=" << worst;
    detail = os.str();
    return worst >= -1e-6;
  });

  h.run(8, "anytime contract on 20 instances", [&](std::string& detail) {
    int ok = 0;
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
      Network net = testsupport::random_mixed_sqpn(seed);
      testsupport::Rng rng(seed);
      Query q = testsupport::random_query(net, rng);
      MultilinearProgram p = q.evidence.empty()
                                 ? pose_marginal_query(net, q.variable, q.value)
                                 : pose_influence_query(net, q);
      SolverOptions opt;
      opt.gap_tol = 1e-4;
      bool monotone = true;
      double last = std::numeric_limits<double>::infinity();
      double last_inc = -std::numeric_limits<double>::infinity();
      SolveResult hi = solve(p, Sense::maximize, opt, [&](long, double b, double inc, double) {
        if (b > last + 1e-12) monotone = false;
        if (inc < last_inc - 1e-12) monotone = false;
        last = b;
        last_inc = inc;
      });
      bool gap_ok = hi.status != SolveStatus::converged || hi.gap <= opt.gap_tol;
      if (monotone && gap_ok) ++ok;
    }
    detail = std::to_string(ok) + "/20";
    return ok == 20;
  });

  h.run(9, "logic assessments never widen, tautology changes nothing", [&](std::string& detail) {
    int narrowed = 0, total = 0;
    for (std::uint64_t seed = 300; total < 20; ++seed) {
      Network net = testsupport::random_mixed_sqpn(seed);
      FreeParams params = free_parameters(net);
      testsupport::Rng rng(seed + 1);
      Query q = testsupport::random_query(net, rng);
      if (q.evidence.empty()) continue;
      auto samples = sample_feasible(net, params, 1, seed, 20000);
      if (samples.empty()) continue;
      ++total;

      SolverOptions opt;
      opt.gap_tol = 1e-5;
      MultilinearProgram base = pose_influence_query(net, q);
      SolveResult lo1 = solve(base, Sense::minimize, opt);
      SolveResult hi1 = solve(base, Sense::maximize, opt);

      // a disjunction held with the probability it has at a feasible point
      int va = rng.below(net.size()), vb = rng.below(net.size());
      std::string formula = net.var(va).name + " | !" + net.var(vb).name;
      Network materialized = materialize_network(net, params, samples[0]);
      double alpha = probability_of_formula(materialized, parse_formula(formula));
      net.logic_assessments.push_back({formula, {}, alpha});

      MultilinearProgram tight = pose_influence_query(net, q);
      SolveResult lo2 = solve(tight, Sense::minimize, opt);
      SolveResult hi2 = solve(tight, Sense::maximize, opt);
      double slack = 3 * opt.gap_tol;
      if (lo2.bound >= lo1.bound - slack && hi2.bound <= hi1.bound + slack) ++narrowed;
    }

    // tautology: report equality, byte for byte
    Network net = load_network_file(fixture("example4.net"));
    Query q{net.variable_index("X"), 0, {{net.variable_index("Y"), 0}}};
    SolverOptions opt;
    opt.gap_tol = 1e-3;
    auto report_of = [&](const Network& n) {
      MultilinearProgram p = pose_influence_query(n, q);
      SolveResult lo = solve(p, Sense::minimize, opt);
      SolveResult hi = solve(p, Sense::maximize, opt);
      QueryReport report;
      report.query = "X=x";
      report.evidence = "Y=y";
      report.objective = "influence";
      report.interval = {lo.bound, hi.bound};
      report.inner = {lo.incumbent, hi.incumbent};
      report.gap = std::max(lo.gap, hi.gap);
      report.nodes = lo.nodes + hi.nodes;
      report.status = solve_status_name(lo.status);
      report.gap_tol = opt.gap_tol;
      report.max_nodes = opt.max_nodes;
      report.seed = opt.seed;
      return write_report(report);
    };
    std::string before = report_of(net);
    net.logic_assessments.push_back({"X | !X", {}, 1.0});
    std::string after = report_of(net);

    detail = std::to_string(narrowed) + "/20 contained, tautology " +
             (before == after ? "identical" : "DIFFERS");
    return narrowed == 20 && before == after;
  });

  h.run(10, "marginal interval of the learned example5 fragment", [&](std::string& detail) {
    Network net = load_network_file(fixture("example5.net"));
    CredalNetwork credal = fit_idm(net, published_counts(net), IdmConfig{2.0});
    int x = credal.network.variable_index("X");
    MultilinearProgram p = pose_marginal_query(credal.network, x, 0);
    SolverOptions opt;
    opt.gap_tol = 1e-4;
    SolveResult lo = solve(p, Sense::minimize, opt);
    SolveResult hi = solve(p, Sense::maximize, opt);
    Interval grid = grid_bounds(credal.network, Query{x, 0, {}}, QueryKind::marginal,
                                GridSpec{0.02, 3});
    double hausdorff =
        std::max(std::abs(lo.bound - grid.lo), std::abs(hi.bound - grid.hi));
    std::ostringstream os;
    os << "solver=[" << lo.bound << ", " << hi.bound << "] oracle=[" << grid.lo << ", "
       << grid.hi << "] (the published [0.21, 0.32] is not reproducible; see README)";
    detail = os.str();
    return hausdorff <= 5e-3;
  });

  return h.all_ok ? 0 : 1;
}
