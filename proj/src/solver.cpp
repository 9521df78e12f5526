#include "sqpn/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <set>

#include "sqpn/errors.hpp"

namespace sqpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFoldTol = 1e-14;

struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed ^ 0x9e3779b97f4a7c15ULL) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
};

// primal variables feeding each variable through the definition chain
std::vector<std::vector<int>> primal_support(const MultilinearProgram& p) {
  std::vector<std::vector<int>> support(p.cs.vars.size());
  std::vector<char> is_primal(p.cs.vars.size(), 0);
  for (int v : p.primal) {
    is_primal[size_t(v)] = 1;
    support[size_t(v)] = {v};
  }
  for (const auto& def : p.defs) {
    std::set<int> acc;
    for (const auto& m : def.rhs)
      for (int v : m.vars) acc.insert(support[size_t(v)].begin(), support[size_t(v)].end());
    support[size_t(def.var)].assign(acc.begin(), acc.end());
  }
  for (const auto& ratio : p.ratios) {
    std::set<int> acc{ratio.var};
    acc.insert(support[size_t(ratio.numerator)].begin(), support[size_t(ratio.numerator)].end());
    acc.insert(support[size_t(ratio.denominator)].begin(),
               support[size_t(ratio.denominator)].end());
    support[size_t(ratio.var)].assign(acc.begin(), acc.end());
  }
  return support;
}

// Euclidean projection of one family row onto box * simplex by bisection on
// the common shift.
void project_row(const MultilinearProgram& p, const FamilyRow& row, Eigen::VectorXd& x) {
  double lo_shift = -2.0, hi_shift = 2.0;
  auto mass = [&](double shift) {
    double total = 0.0;
    for (int v : row.vars) {
      const Interval& b = p.cs.vars[size_t(v)].box;
      total += std::clamp(x[v] + shift, b.lo, b.hi);
    }
    return total;
  };
  if (mass(lo_shift) > 1.0 || mass(hi_shift) < 1.0) {
    // box * simplex empty or degenerate; clamp and bail
    for (int v : row.vars) {
      const Interval& b = p.cs.vars[size_t(v)].box;
      x[v] = std::clamp(x[v], b.lo, b.hi);
    }
    return;
  }
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo_shift + hi_shift);
    if (mass(mid) < 1.0)
      lo_shift = mid;
    else
      hi_shift = mid;
  }
  double shift = 0.5 * (lo_shift + hi_shift);
  for (int v : row.vars) {
    const Interval& b = p.cs.vars[size_t(v)].box;
    x[v] = std::clamp(x[v] + shift, b.lo, b.hi);
  }
}

double objective_coeff(const MultilinearProgram& p, int var) {
  double c = 0.0;
  for (const auto& m : p.objective)
    if (m.vars.size() == 1 && m.vars[0] == var) c += m.coeff;
  return c;
}

// Ratio variables with vanishing denominators are free; point them at the
// objective-improving endpoint.
void settle_free_ratios(const MultilinearProgram& p, double sense_factor, Eigen::VectorXd& x) {
  for (const auto& ratio : p.ratios) {
    if (std::abs(x[ratio.denominator]) > 1e-12) continue;
    const Interval& b = p.cs.vars[size_t(ratio.var)].box;
    double c = sense_factor * objective_coeff(p, ratio.var);
    x[ratio.var] = c >= 0 ? b.hi : b.lo;
  }
}

double constraint_residual(const MultilinearConstraint& c, const Eigen::VectorXd& x) {
  double lhs = evaluate_terms(c.terms, x);
  switch (c.cmp) {
    case Cmp::le: return std::max(0.0, lhs - c.rhs);
    case Cmp::ge: return std::max(0.0, c.rhs - lhs);
    case Cmp::eq: return std::abs(lhs - c.rhs);
  }
  return 0.0;
}

}  // namespace

std::string solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iteration_limit: return "iteration_limit";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

bool propagate_boxes(const MultilinearProgram& p, Box& box) {
  const double pad = 1e-12;
  RowMap rows = build_row_map(p.cs);
  auto tighten_unit_sum = [&](const std::vector<int>& members) {
    double sum_lo = 0.0, sum_hi = 0.0;
    for (int v : members) {
      sum_lo += box[size_t(v)].lo;
      sum_hi += box[size_t(v)].hi;
    }
    for (int v : members) {
      Interval& b = box[size_t(v)];
      double lo = 1.0 - (sum_hi - b.hi) - pad;
      double hi = 1.0 - (sum_lo - b.lo) + pad;
      b.lo = std::max(b.lo, lo);
      b.hi = std::min(b.hi, hi);
      if (b.lo > b.hi + 1e-9) return false;
      if (b.lo > b.hi) b.lo = b.hi = 0.5 * (b.lo + b.hi);
    }
    return true;
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& row : p.rows)
      if (!tighten_unit_sum(row.vars)) return false;
    for (const auto& group : p.cs.unit_mass_groups)
      if (!tighten_unit_sum(group)) return false;
    for (const auto& def : p.defs) {
      Interval value = terms_interval(def.rhs, box, rows);
      Interval& b = box[size_t(def.var)];
      b.lo = std::max(b.lo, value.lo - pad);
      b.hi = std::min(b.hi, value.hi + pad);
      if (b.lo > b.hi + 1e-9) return false;
      if (b.lo > b.hi) b.lo = b.hi = 0.5 * (b.lo + b.hi);
    }
    for (const auto& ratio : p.ratios) {
      const Interval& num = box[size_t(ratio.numerator)];
      const Interval& den = box[size_t(ratio.denominator)];
      if (den.lo <= 1e-12) continue;
      Interval& b = box[size_t(ratio.var)];
      b.lo = std::max(b.lo, num.lo / den.hi - pad);
      b.hi = std::min(b.hi, num.hi / den.lo + pad);
      if (b.lo > b.hi + 1e-9) return false;
      if (b.lo > b.hi) b.lo = b.hi = 0.5 * (b.lo + b.hi);
    }
  }
  return true;
}

Relaxation relax_mccormick(const MultilinearProgram& p, const Box& box) {
  Relaxation rel;
  int n = static_cast<int>(p.cs.vars.size());
  rel.var_col.assign(size_t(n), -1);
  for (int v = 0; v < n; ++v) {
    if (box[size_t(v)].width() <= kFoldTol) continue;
    rel.var_col[size_t(v)] = rel.lp.add_var(box[size_t(v)]);
  }

  std::map<std::pair<int, int>, int> pair_col;
  std::vector<char> skip(p.cs.constraints.size(), 0);

  auto make_product = [&](int u, int v, int alias_col) {
    const Interval& bu = box[size_t(u)];
    const Interval& bv = box[size_t(v)];
    int w = alias_col;
    if (w < 0) {
      double c1 = bu.lo * bv.lo, c2 = bu.lo * bv.hi, c3 = bu.hi * bv.lo, c4 = bu.hi * bv.hi;
      Interval wb{std::min(std::min(c1, c2), std::min(c3, c4)),
                  std::max(std::max(c1, c2), std::max(c3, c4))};
      w = rel.lp.add_var(wb);
    }
    int cu = rel.var_col[size_t(u)], cv = rel.var_col[size_t(v)];
    rel.lp.add_row({{w, 1.0}, {cu, -bv.lo}, {cv, -bu.lo}}, -bu.lo * bv.lo, kInf);
    rel.lp.add_row({{w, 1.0}, {cu, -bv.hi}, {cv, -bu.hi}}, -bu.hi * bv.hi, kInf);
    rel.lp.add_row({{w, 1.0}, {cu, -bv.hi}, {cv, -bu.lo}}, -kInf, -bu.lo * bv.hi);
    rel.lp.add_row({{w, 1.0}, {cu, -bv.lo}, {cv, -bu.hi}}, -kInf, -bu.hi * bv.lo);
    rel.products.push_back({u, v, w});
    pair_col[std::minmax(u, v)] = w;
    return w;
  };

  // alias product columns onto bilinear auxiliary definitions (aux = u*v)
  for (size_t ci = 0; ci < p.cs.constraints.size(); ++ci) {
    const auto& c = p.cs.constraints[ci];
    if (c.defined_var < 0 || c.terms.size() != 2) continue;
    const Monomial *self = nullptr, *prod = nullptr;
    for (const auto& m : c.terms) {
      if (m.vars.size() == 1 && m.vars[0] == c.defined_var)
        self = &m;
      else if (m.vars.size() == 2)
        prod = &m;
    }
    if (!self || !prod || c.rhs != 0.0) continue;
    if (std::abs(self->coeff - 1.0) > 1e-15 || std::abs(prod->coeff + 1.0) > 1e-15) continue;
    int u = prod->vars[0], v = prod->vars[1];
    if (rel.var_col[size_t(c.defined_var)] < 0 || rel.var_col[size_t(u)] < 0 ||
        rel.var_col[size_t(v)] < 0)
      continue;
    if (pair_col.count(std::minmax(u, v))) continue;
    make_product(u, v, rel.var_col[size_t(c.defined_var)]);
    skip[ci] = 1;
  }

  // maps program monomials to LP terms, creating product columns on demand
  auto linearize = [&](const std::vector<Monomial>& terms, std::map<int, double>& coeffs,
                       double& shift) {
    for (const auto& m : terms) {
      double c = m.coeff;
      std::vector<int> live;
      for (int v : m.vars) {
        if (rel.var_col[size_t(v)] < 0)
          c *= box[size_t(v)].lo;
        else
          live.push_back(v);
      }
      if (live.empty()) {
        shift += c;
      } else if (live.size() == 1) {
        coeffs[rel.var_col[size_t(live[0])]] += c;
      } else {
        assert(live.size() == 2);
        auto key = std::minmax(live[0], live[1]);
        auto it = pair_col.find(key);
        int w = it != pair_col.end() ? it->second : make_product(key.first, key.second, -1);
        coeffs[w] += c;
      }
    }
  };

  for (size_t ci = 0; ci < p.cs.constraints.size(); ++ci) {
    if (skip[ci]) continue;
    const auto& c = p.cs.constraints[ci];
    std::map<int, double> coeffs;
    double shift = 0.0;
    linearize(c.terms, coeffs, shift);
    double lo = c.cmp == Cmp::le ? -kInf : c.rhs - shift;
    double hi = c.cmp == Cmp::ge ? kInf : c.rhs - shift;
    std::vector<std::pair<int, double>> row(coeffs.begin(), coeffs.end());
    rel.lp.add_row(std::move(row), lo, hi);
  }

  std::map<int, double> obj;
  double obj_shift = 0.0;
  linearize(p.objective, obj, obj_shift);
  for (const auto& [col, c] : obj) rel.lp.objective[size_t(col)] = c;
  rel.obj_offset = obj_shift;
  return rel;
}

std::optional<Eigen::VectorXd> local_refine(const MultilinearProgram& p, Sense sense,
                                            const Eigen::VectorXd& start,
                                            const SolverOptions& options) {
  const double sense_factor = sense == Sense::maximize ? 1.0 : -1.0;
  Eigen::VectorXd x = start;
  for (const auto& v : p.cs.vars) x[v.id] = std::clamp(x[v.id], v.box.lo, v.box.hi);

  auto sweep = [&]() {
    sweep_definitions(p, x);
    settle_free_ratios(p, sense_factor, x);
  };

  std::vector<const MultilinearConstraint*> targets;
  for (const auto& c : p.cs.constraints)
    if (c.group == ConstraintGroup::relation || c.group == ConstraintGroup::logic)
      targets.push_back(&c);

  // repair: alternate row projections, definition sweeps, and projections
  // onto violated relation/logic constraints
  int repair_iters = std::max(40, options.refine_iters);
  for (int it = 0; it < repair_iters; ++it) {
    for (const auto& row : p.rows) project_row(p, row, x);
    sweep();
    double worst = 0.0;
    for (const auto* c : targets) worst = std::max(worst, constraint_residual(*c, x));
    if (worst <= 1e-10) break;

    for (const auto* c : targets) {
      double lhs = evaluate_terms(c->terms, x);
      bool violated = (c->cmp == Cmp::le && lhs > c->rhs + 1e-12) ||
                      (c->cmp == Cmp::ge && lhs < c->rhs - 1e-12) ||
                      (c->cmp == Cmp::eq && std::abs(lhs - c->rhs) > 1e-12);
      if (!violated) continue;

      if (c->group == ConstraintGroup::relation) {
        // analytic gradient on primal variables
        std::map<int, double> grad;
        for (const auto& m : c->terms) {
          if (m.vars.size() == 1) {
            grad[m.vars[0]] += m.coeff;
          } else if (m.vars.size() == 2) {
            grad[m.vars[0]] += m.coeff * x[m.vars[1]];
            grad[m.vars[1]] += m.coeff * x[m.vars[0]];
          }
        }
        double norm2 = 0.0;
        for (const auto& [v, g] : grad) norm2 += g * g;
        if (norm2 <= 1e-18) continue;
        double step = (lhs - c->rhs) / norm2;
        for (const auto& [v, g] : grad) {
          const Interval& b = p.cs.vars[size_t(v)].box;
          x[v] = std::clamp(x[v] - step * g, b.lo, b.hi);
        }
      } else {
        // logic constraints act through messages: numeric gradient over primal
        std::map<int, double> grad;
        const double h = 1e-6;
        for (int v : p.primal) {
          double saved = x[v];
          x[v] = saved + h;
          sweep();
          double up = evaluate_terms(c->terms, x);
          x[v] = saved - h;
          sweep();
          double down = evaluate_terms(c->terms, x);
          x[v] = saved;
          grad[v] = (up - down) / (2 * h);
        }
        sweep();
        double norm2 = 0.0;
        for (const auto& [v, g] : grad) norm2 += g * g;
        if (norm2 <= 1e-18) continue;
        double step = (lhs - c->rhs) / norm2;
        for (const auto& [v, g] : grad) {
          const Interval& b = p.cs.vars[size_t(v)].box;
          x[v] = std::clamp(x[v] - step * g, b.lo, b.hi);
        }
        sweep();
      }
    }
  }
  for (const auto& row : p.rows) project_row(p, row, x);
  sweep();
  if (max_violation(p, x) > options.feas_tol) return std::nullopt;

  // coordinate ascent: mass shifts inside one row, synchronized shifts over
  // row pairs of the same node (slides along active pairwise constraints),
  // and an objective-gradient step with repair
  double value = sense_factor * evaluate_objective(p, x);
  auto try_trial = [&](Eigen::VectorXd& trial) {
    sweep_definitions(p, trial);
    settle_free_ratios(p, sense_factor, trial);
    if (max_violation(p, trial) > options.feas_tol) return false;
    double tval = sense_factor * evaluate_objective(p, trial);
    if (tval <= value + 1e-12) return false;
    x = trial;
    value = tval;
    return true;
  };
  for (int it = 0; it < options.refine_iters; ++it) {
    bool improved = false;
    for (const auto& row : p.rows) {
      for (size_t a = 0; a < row.vars.size(); ++a) {
        for (size_t b = 0; b < row.vars.size(); ++b) {
          if (a == b) continue;
          int va = row.vars[a], vb = row.vars[b];
          double room = std::min(p.cs.vars[size_t(va)].box.hi - x[va],
                                 x[vb] - p.cs.vars[size_t(vb)].box.lo);
          if (room <= 1e-12) continue;
          for (double frac : {1.0, 0.25, 0.0625}) {
            Eigen::VectorXd trial = x;
            trial[va] += room * frac;
            trial[vb] -= room * frac;
            if (try_trial(trial)) {
              improved = true;
              break;
            }
          }
        }
      }
    }
    for (size_t r1 = 0; r1 < p.rows.size(); ++r1) {
      for (size_t r2 = r1 + 1; r2 < p.rows.size(); ++r2) {
        const auto& rowa = p.rows[r1];
        const auto& rowb = p.rows[r2];
        if (rowa.node != rowb.node || rowa.vars.size() != rowb.vars.size()) continue;
        for (size_t a = 0; a < rowa.vars.size(); ++a) {
          for (size_t b = 0; b < rowa.vars.size(); ++b) {
            if (a == b) continue;
            double room = std::min(
                std::min(p.cs.vars[size_t(rowa.vars[a])].box.hi - x[rowa.vars[a]],
                         x[rowa.vars[b]] - p.cs.vars[size_t(rowa.vars[b])].box.lo),
                std::min(p.cs.vars[size_t(rowb.vars[a])].box.hi - x[rowb.vars[a]],
                         x[rowb.vars[b]] - p.cs.vars[size_t(rowb.vars[b])].box.lo));
            if (room <= 1e-12) continue;
            for (double sign : {1.0, -1.0}) {
              bool ok = false;
              for (double frac : {1.0, 0.25, 0.0625}) {
                Eigen::VectorXd trial = x;
                trial[rowa.vars[a]] += sign * room * frac;
                trial[rowa.vars[b]] -= sign * room * frac;
                trial[rowb.vars[a]] += sign * room * frac;
                trial[rowb.vars[b]] -= sign * room * frac;
                bool inside = true;
                for (int v : {rowa.vars[a], rowa.vars[b], rowb.vars[a], rowb.vars[b]})
                  if (!p.cs.vars[size_t(v)].box.contains(trial[v], 1e-12)) inside = false;
                if (!inside) continue;
                if (try_trial(trial)) {
                  ok = true;
                  improved = true;
                  break;
                }
              }
              if (ok) break;
            }
          }
        }
      }
    }
    {
      // numeric objective gradient over the primal variables, then repair
      const double h = 1e-6;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
      Eigen::VectorXd probe = x;
      for (int v : p.primal) {
        double saved = probe[v];
        probe[v] = saved + h;
        sweep_definitions(p, probe);
        settle_free_ratios(p, sense_factor, probe);
        double up = sense_factor * evaluate_objective(p, probe);
        probe[v] = saved - h;
        sweep_definitions(p, probe);
        settle_free_ratios(p, sense_factor, probe);
        double down = sense_factor * evaluate_objective(p, probe);
        probe[v] = saved;
        grad[v] = (up - down) / (2 * h);
      }
      double norm = grad.norm();
      if (norm > 1e-12) {
        for (double eta : {0.3, 0.08, 0.02}) {
          Eigen::VectorXd trial = x + (eta / norm) * grad;
          for (const auto& v : p.cs.vars) trial[v.id] = std::clamp(trial[v.id], v.box.lo, v.box.hi);
          for (const auto& row : p.rows) project_row(p, row, trial);
          if (try_trial(trial)) {
            improved = true;
            break;
          }
        }
      }
    }
    if (!improved) break;
  }
  return x;
}

namespace {

struct NodeRec {
  int parent = -1;
  int var = -1;
  Interval forced{0.0, 1.0};
  double bound = kInf;
};

struct HeapItem {
  double bound;
  long id;
};
struct HeapCmp {
  bool operator()(const HeapItem& a, const HeapItem& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;  // max-heap on bound
    return a.id > b.id;                                // oldest first on ties
  }
};

}  // namespace

SolveResult solve(const MultilinearProgram& program, Sense sense, const SolverOptions& options,
                  const NodeObserver& observer) {
  // run as maximization; flip the objective (and results) for minimization
  const double sf = sense == Sense::maximize ? 1.0 : -1.0;
  MultilinearProgram p = program;
  if (sense == Sense::minimize)
    for (auto& m : p.objective) m.coeff = -m.coeff;

  SolveResult result;
  Box root_box = initial_box(p);
  bool root_ok = propagate_boxes(p, root_box);

  std::vector<NodeRec> nodes;
  std::priority_queue<HeapItem, std::vector<HeapItem>, HeapCmp> heap;
  if (root_ok) {
    nodes.push_back(NodeRec{});
    heap.push({kInf, 0});
  }

  double incumbent = -kInf;
  Eigen::VectorXd incumbent_point;
  long processed = 0;
  Rng rng(options.seed);
  std::vector<std::vector<int>> support = primal_support(p);

  auto global_bound = [&]() {
    double b = heap.empty() ? -kInf : heap.top().bound;
    return std::max(b, incumbent);
  };

  // cap candidates at the current certified bound so the reported bound
  // sequence stays monotone and the gap nonnegative
  auto try_candidate = [&](const Eigen::VectorXd& start, double cap) {
    auto refined = local_refine(p, Sense::maximize, start, options);
    if (!refined) return;
    double value = std::min(evaluate_objective(p, *refined), cap);
    if (value > incumbent) {
      incumbent = value;
      incumbent_point = *refined;
    }
  };

  auto report = [&]() {
    double b = global_bound();
    double inc = incumbent;
    double gap = (inc > -kInf && b < kInf) ? b - inc : kInf;
    if (observer) observer(processed, sf * b, sf * inc, gap);
    if (options.progress && processed % options.progress_period == 0) {
      (*options.progress) << "nodes=" << processed << " bound=" << sf * b
                          << " incumbent=" << sf * inc << " gap=" << gap << "\n";
    }
  };

  while (!heap.empty()) {
    if (incumbent > -kInf && global_bound() - incumbent <= options.gap_tol) break;
    if (processed >= options.max_nodes) break;

    HeapItem item = heap.top();
    heap.pop();
    NodeRec node = nodes[size_t(item.id)];
    ++processed;

    // rebuild the node box from the branching chain
    Box box = root_box;
    {
      std::vector<long> chain;
      for (long cur = item.id; cur > 0; cur = nodes[size_t(cur)].parent)
        chain.push_back(cur);
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const NodeRec& n = nodes[size_t(*it)];
        box[size_t(n.var)] = intersect(box[size_t(n.var)], n.forced);
      }
    }
    if (!propagate_boxes(p, box)) {
      report();
      continue;
    }

    Relaxation rel = relax_mccormick(p, box);

    // bound tightening on ratio denominators: interval arithmetic cannot see
    // that P(e) stays away from zero, but the relaxation can prove it
    bool node_infeasible = false;
    if (!p.ratios.empty()) {
      bool tightened = false;
      for (const auto& ratio : p.ratios) {
        int col = rel.var_col[size_t(ratio.denominator)];
        if (col < 0) continue;
        LinearProgram obbt = rel.lp;
        obbt.objective.assign(obbt.objective.size(), 0.0);
        obbt.objective[size_t(col)] = -1.0;
        LPResult down = lp_solve(obbt);
        obbt.objective[size_t(col)] = 1.0;
        LPResult up = lp_solve(obbt);
        if (down.status == LPStatus::infeasible || up.status == LPStatus::infeasible) {
          node_infeasible = true;
          break;
        }
        Interval& den = box[size_t(ratio.denominator)];
        if (down.status == LPStatus::optimal) {
          double lo = -down.value - options.bound_safety;
          if (lo > den.lo + 1e-9) {
            den.lo = lo;
            tightened = true;
          }
        }
        if (up.status == LPStatus::optimal) {
          double hi = up.value + options.bound_safety;
          if (hi < den.hi - 1e-9) {
            den.hi = hi;
            tightened = true;
          }
        }
      }
      if (node_infeasible) {
        report();
        continue;
      }
      if (tightened) {
        if (!propagate_boxes(p, box)) {
          report();
          continue;
        }
        rel = relax_mccormick(p, box);
      }
    }

    LPResult lp = lp_solve(rel.lp);
    if (lp.status == LPStatus::infeasible) {
      report();
      continue;
    }

    double node_bound = node.bound;
    Eigen::VectorXd lp_point;
    if (lp.status == LPStatus::optimal) {
      node_bound = std::min(node_bound, lp.value + rel.obj_offset + options.bound_safety);
      lp_point = lp.point;
    }

    double cap = std::max(node_bound, heap.empty() ? -kInf : heap.top().bound);
    cap = std::max(cap, incumbent);

    // map the LP point back onto program variables for refinement
    Eigen::VectorXd start(p.cs.vars.size());
    for (const auto& v : p.cs.vars) {
      int col = rel.var_col[size_t(v.id)];
      start[v.id] = col >= 0 && lp_point.size() > 0 ? lp_point[col] : box[size_t(v.id)].mid();
    }
    try_candidate(start, cap);
    if (item.id == 0) {
      for (int s = 1; s < options.multistart; ++s) {
        Eigen::VectorXd random_start(p.cs.vars.size());
        for (const auto& v : p.cs.vars)
          random_start[v.id] = box[size_t(v.id)].lo + rng.uniform() * box[size_t(v.id)].width();
        try_candidate(random_start, cap);
      }
    }

    if (incumbent > -kInf && node_bound <= incumbent + 1e-12) {
      report();
      continue;
    }

    // branch on the largest |w - u*v| envelope violation; prefer the widest
    // primal variable feeding the violated product so that propagation can
    // retighten the message boxes downstream
    int branch_var = -1;
    double branch_point = 0.0;
    if (lp.status == LPStatus::optimal) {
      auto value_of = [&](int v) {
        int col = rel.var_col[size_t(v)];
        return col >= 0 ? lp_point[col] : box[size_t(v)].lo;
      };
      double worst = 1e-9;
      int worst_u = -1, worst_v = -1;
      for (const auto& prod : rel.products) {
        double viol = std::abs(lp_point[prod.col] - value_of(prod.u) * value_of(prod.v));
        if (viol > worst) {
          worst = viol;
          worst_u = prod.u;
          worst_v = prod.v;
        }
      }
      if (worst_u >= 0) {
        double widest = 1e-9;
        for (int side : {worst_u, worst_v}) {
          for (int v : support[size_t(side)]) {
            if (box[size_t(v)].width() > widest) {
              widest = box[size_t(v)].width();
              branch_var = v;
              branch_point = value_of(v);
            }
          }
        }
        if (branch_var < 0) {
          int wide = box[size_t(worst_u)].width() >= box[size_t(worst_v)].width() ? worst_u
                                                                                  : worst_v;
          if (box[size_t(wide)].width() > 1e-9) {
            branch_var = wide;
            branch_point = value_of(wide);
          }
        }
      }
    }
    if (branch_var < 0) {
      // fall back to the widest primal variable
      double widest = 1e-8;
      for (int v : p.primal) {
        if (box[size_t(v)].width() > widest) {
          widest = box[size_t(v)].width();
          branch_var = v;
          branch_point = box[size_t(v)].mid();
        }
      }
    }
    if (branch_var < 0) {
      report();
      continue;  // box is a point; nothing left to split
    }

    const Interval& b = box[size_t(branch_var)];
    double split = std::clamp(branch_point, b.lo + 0.2 * b.width(), b.lo + 0.8 * b.width());
    nodes.push_back(NodeRec{int(item.id), branch_var, Interval{b.lo, split}, node_bound});
    heap.push({node_bound, long(nodes.size()) - 1});
    nodes.push_back(NodeRec{int(item.id), branch_var, Interval{split, b.hi}, node_bound});
    heap.push({node_bound, long(nodes.size()) - 1});

    report();
  }

  double final_bound = global_bound();
  result.nodes = processed;
  result.has_incumbent = incumbent > -kInf;
  if (!result.has_incumbent && heap.empty()) {
    result.status = SolveStatus::infeasible;
    result.bound = sf * final_bound;
    result.gap = kInf;
    return result;
  }
  if (heap.empty()) final_bound = incumbent;
  result.bound = sf * final_bound;
  result.incumbent = result.has_incumbent ? sf * incumbent : sf * final_bound;
  result.point = incumbent_point;
  result.gap = result.has_incumbent ? final_bound - incumbent : kInf;
  result.status = (result.has_incumbent && result.gap <= options.gap_tol)
                      ? SolveStatus::converged
                      : SolveStatus::iteration_limit;
  return result;
}

}  // namespace sqpn
