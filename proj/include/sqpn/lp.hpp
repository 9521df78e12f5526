#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "sqpn/model.hpp"

namespace sqpn {

enum class LPStatus { optimal, infeasible, unbounded, numerical_failure };

/// Maximization LP with finite variable bounds and two-sided rows
/// lo <= a.x <= hi (equality when lo == hi, one-sided via +-infinity).
struct LinearProgram {
  int num_vars = 0;
  std::vector<Interval> bounds;
  std::vector<double> objective;
  struct Row {
    std::vector<std::pair<int, double>> coeffs;
    double lo = 0.0;
    double hi = 0.0;
  };
  std::vector<Row> rows;

  int add_var(Interval box, double cost = 0.0);
  void add_row(std::vector<std::pair<int, double>> coeffs, double lo, double hi);
};

struct LPResult {
  LPStatus status = LPStatus::numerical_failure;
  double value = 0.0;
  Eigen::VectorXd point;
};

/// Deterministic bounded-variable simplex (Bland's rule, lowest index wins
/// all ties). Optimal results satisfy rows and bounds within 1e-7.
LPResult lp_solve(const LinearProgram& lp);

}  // namespace sqpn
