#include "sqpn/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace sqpn {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCostTol = 1e-9;
constexpr double kPivotTol = 2e-7;
}  // namespace

int LinearProgram::add_var(Interval box, double cost) {
  bounds.push_back(box);
  objective.push_back(cost);
  return num_vars++;
}

void LinearProgram::add_row(std::vector<std::pair<int, double>> coeffs, double lo, double hi) {
  rows.push_back(Row{std::move(coeffs), lo, hi});
}

// Bounded-variable primal simplex over the homogeneous system A x - s = 0,
// where s are row-activity variables carrying the row bounds. Infeasible
// starts get one artificial column per violated row; phase 1 drives them to
// zero. Bland's rule everywhere: lowest index enters, lowest basis variable
// leaves among ties, so the pivot sequence is deterministic.
struct Simplex {
  int n_struct;
  int m;
  int total;
  Eigen::MatrixXd T;  // working tableau, m x total
  std::vector<Interval> bound;
  std::vector<int> basis;       // row -> column
  std::vector<int> status;      // 0 basic, 1 at lower, 2 at upper
  Eigen::VectorXd x;

  bool infeasible_box = false;

  explicit Simplex(const LinearProgram& lp) {
    n_struct = lp.num_vars;
    m = static_cast<int>(lp.rows.size());
    int n_artificial = m;  // reserve; unused ones stay pinned at zero
    total = n_struct + m + n_artificial;
    T = Eigen::MatrixXd::Zero(m, total);
    bound.resize(size_t(total), Interval{0.0, 0.0});
    for (int j = 0; j < n_struct; ++j) {
      bound[size_t(j)] = lp.bounds[size_t(j)];
      if (bound[size_t(j)].lo > bound[size_t(j)].hi) infeasible_box = true;
    }

    for (int r = 0; r < m; ++r) {
      double amin = 0.0, amax = 0.0;
      for (const auto& [j, a] : lp.rows[size_t(r)].coeffs) {
        T(r, j) += a;
        const Interval& b = lp.bounds[size_t(j)];
        if (a >= 0) {
          amin += a * b.lo;
          amax += a * b.hi;
        } else {
          amin += a * b.hi;
          amax += a * b.lo;
        }
      }
      double pad = 1e-9 * (1.0 + std::abs(amin) + std::abs(amax));
      double lo = std::max(lp.rows[size_t(r)].lo, amin - pad);
      double hi = std::min(lp.rows[size_t(r)].hi, amax + pad);
      if (lo > hi) infeasible_box = true;
      int slack = n_struct + r;
      T(r, slack) = -1.0;
      bound[size_t(slack)] = Interval{lo, hi};
    }

    basis.assign(size_t(m), -1);
    status.assign(size_t(total), 1);  // everything at lower bound initially
    x = Eigen::VectorXd::Zero(total);
  }

  void set_nonbasic_values() {
    for (int j = 0; j < total; ++j) {
      if (status[size_t(j)] == 1) x[j] = bound[size_t(j)].lo;
      else if (status[size_t(j)] == 2) x[j] = bound[size_t(j)].hi;
    }
  }

  // Basic values solve T x = 0 given the nonbasic values.
  void compute_basics() {
    for (int r = 0; r < m; ++r) {
      double v = 0.0;
      for (int j = 0; j < total; ++j) {
        if (status[size_t(j)] == 0) continue;
        double a = T(r, j);
        if (a != 0.0) v -= a * x[j];
      }
      x[basis[size_t(r)]] = v;
    }
  }

  void pivot(int leave_row, int enter_col) {
    double piv = T(leave_row, enter_col);
    T.row(leave_row) /= piv;
    for (int r = 0; r < m; ++r) {
      if (r == leave_row) continue;
      double factor = T(r, enter_col);
      if (factor != 0.0) T.row(r) -= factor * T.row(leave_row);
    }
    basis[size_t(leave_row)] = enter_col;
  }

  // One simplex phase under cost vector c (maximization). Returns false on
  // iteration overrun. Values are updated incrementally and refreshed
  // periodically against the tableau. Pricing is steepest-coefficient with a
  // deterministic switch to Bland's rule during degenerate stalls.
  bool run(const Eigen::VectorXd& c, long max_iters) {
    set_nonbasic_values();
    compute_basics();
    int stall = 0;
    for (long iter = 0; iter < max_iters; ++iter) {
      if (iter % 32 == 31) {
        set_nonbasic_values();
        compute_basics();
      }

      Eigen::VectorXd d = c;
      for (int r = 0; r < m; ++r) {
        double cb = c[basis[size_t(r)]];
        if (cb != 0.0) d -= cb * T.row(r).transpose();
      }

      bool bland = stall > 25;
      int enter = -1;
      int dir = 0;
      double best_score = kCostTol;
      for (int j = 0; j < total; ++j) {
        if (status[size_t(j)] == 0) continue;
        if (bound[size_t(j)].width() <= 0.0) continue;  // pinned
        double score = status[size_t(j)] == 1 ? d[j] : -d[j];
        if (score <= best_score) continue;
        enter = j;
        dir = status[size_t(j)] == 1 ? 1 : -1;
        if (bland) break;  // first eligible index
        best_score = score;
      }
      if (enter < 0) {
        set_nonbasic_values();
        compute_basics();
        return true;  // optimal for this cost
      }

      double t_max = bound[size_t(enter)].width();
      int leave = -1;  // -1 means bound flip
      for (int r = 0; r < m; ++r) {
        double coef = -T(r, enter) * dir;  // d x_B[r] / d t
        if (std::abs(coef) <= kPivotTol) continue;
        int bv = basis[size_t(r)];
        double limit;
        if (coef > 0)
          limit = (bound[size_t(bv)].hi - x[bv]) / coef;
        else
          limit = (bound[size_t(bv)].lo - x[bv]) / coef;
        if (limit < 0) limit = 0;
        if (limit < t_max - 1e-12 ||
            (limit <= t_max + 1e-12 && leave >= 0 && bv < basis[size_t(leave)])) {
          t_max = std::min(t_max, limit);
          leave = r;
        }
      }

      stall = t_max <= 1e-12 ? stall + 1 : 0;

      for (int r = 0; r < m; ++r) {
        double coef = -T(r, enter) * dir;
        if (coef != 0.0) x[basis[size_t(r)]] += coef * t_max;
      }
      x[enter] += dir * t_max;

      if (leave < 0) {
        status[size_t(enter)] = status[size_t(enter)] == 1 ? 2 : 1;  // bound flip
        continue;
      }
      int bv = basis[size_t(leave)];
      double to_lo = std::abs(x[bv] - bound[size_t(bv)].lo);
      double to_hi = std::abs(x[bv] - bound[size_t(bv)].hi);
      pivot(leave, enter);
      status[size_t(enter)] = 0;
      status[size_t(bv)] = to_lo <= to_hi ? 1 : 2;
      x[bv] = to_lo <= to_hi ? bound[size_t(bv)].lo : bound[size_t(bv)].hi;
    }
    return false;
  }
};

LPResult lp_solve(const LinearProgram& lp) {
  LPResult result;

  // empty-coefficient rows reduce to constant feasibility checks
  for (const auto& row : lp.rows) {
    if (!row.coeffs.empty()) continue;
    if (0.0 < row.lo - 1e-9 || 0.0 > row.hi + 1e-9) {
      result.status = LPStatus::infeasible;
      return result;
    }
  }

  Simplex s(lp);
  if (s.infeasible_box) {
    result.status = LPStatus::infeasible;
    return result;
  }
  int m = s.m, n = s.n_struct, total = s.total;

  // initial basis: slack where its natural activity fits, artificial otherwise
  s.set_nonbasic_values();
  bool need_phase1 = false;
  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
  for (int r = 0; r < m; ++r) {
    double activity = 0.0;
    for (int j = 0; j < n; ++j)
      if (s.T(r, j) != 0.0) activity += s.T(r, j) * s.x[j];
    int slack = n + r;
    int artificial = n + m + r;
    const Interval& sb = s.bound[size_t(slack)];
    if (activity >= sb.lo - 1e-12 && activity <= sb.hi + 1e-12) {
      s.basis[size_t(r)] = slack;
      s.status[size_t(slack)] = 0;
      continue;
    }
    // row r: A x - s + z = 0 with s clamped at its violated bound
    double sval = std::clamp(activity, sb.lo, sb.hi);
    double z = sval - activity;  // basic artificial value
    s.T(r, artificial) = 1.0;
    s.bound[size_t(artificial)] = z >= 0 ? Interval{0.0, z + 1.0} : Interval{z - 1.0, 0.0};
    s.status[size_t(slack)] = sval == sb.lo ? 1 : 2;
    s.basis[size_t(r)] = artificial;
    s.status[size_t(artificial)] = 0;
    phase1[artificial] = z >= 0 ? -1.0 : 1.0;  // maximize -|z|
    need_phase1 = true;
  }
  // scale rows so basic columns form an identity (slacks enter with -1)
  for (int r = 0; r < m; ++r) {
    double piv = s.T(r, s.basis[size_t(r)]);
    if (piv != 1.0) s.T.row(r) /= piv;
  }

  long max_iters = 400 + 40L * (m + total);
  if (need_phase1) {
    if (!s.run(phase1, max_iters)) {
      result.status = LPStatus::numerical_failure;
      return result;
    }
    s.set_nonbasic_values();
    s.compute_basics();
    double infeasibility = 0.0;
    for (int r = 0; r < m; ++r) infeasibility += std::abs(s.x[n + m + r]);
    // a phase-1 residual only certifies infeasibility while the arithmetic
    // stayed sane; explosions must not prune
    if (infeasibility > 1e-7 && (infeasibility > 1e3 || s.x.cwiseAbs().maxCoeff() > 1e7)) {
      result.status = LPStatus::numerical_failure;
      return result;
    }
    if (infeasibility > 1e-7) {
#ifdef SQPN_LP_TRACE
      std::fprintf(stderr, "phase1 ended with infeasibility %.12g\n", infeasibility);
      for (int r = 0; r < m; ++r)
        if (std::abs(s.x[n + m + r]) > 1e-9)
          std::fprintf(stderr, "  z[%d] = %.12g bounds [%g, %g] status %d basic=%d\n", r,
                       s.x[n + m + r], s.bound[size_t(n + m + r)].lo,
                       s.bound[size_t(n + m + r)].hi, s.status[size_t(n + m + r)],
                       s.basis[size_t(r)] == n + m + r);
#endif
      result.status = LPStatus::infeasible;
      return result;
    }
  }
  // pin artificials at zero for phase 2
  for (int r = 0; r < m; ++r) s.bound[size_t(n + m + r)] = Interval{0.0, 0.0};

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(total);
  for (int j = 0; j < n; ++j) cost[j] = lp.objective[size_t(j)];
  if (!s.run(cost, max_iters)) {
    result.status = LPStatus::numerical_failure;
    return result;
  }
  s.set_nonbasic_values();
  s.compute_basics();

  // verify against the original rows, not the drifted tableau
  for (int j = 0; j < total; ++j) {
    if (s.x[j] < s.bound[size_t(j)].lo - 1e-7 || s.x[j] > s.bound[size_t(j)].hi + 1e-7) {
      result.status = LPStatus::numerical_failure;
      return result;
    }
  }
  for (int r = 0; r < m; ++r) {
    double activity = 0.0;
    for (const auto& [j, a] : lp.rows[size_t(r)].coeffs) activity += a * s.x[j];
    if (activity < lp.rows[size_t(r)].lo - 1e-7 || activity > lp.rows[size_t(r)].hi + 1e-7) {
      result.status = LPStatus::numerical_failure;
      return result;
    }
  }

  result.status = LPStatus::optimal;
  result.point = s.x.head(n);
  result.value = 0.0;
  for (int j = 0; j < n; ++j) result.value += lp.objective[size_t(j)] * s.x[j];
  return result;
}

}  // namespace sqpn
