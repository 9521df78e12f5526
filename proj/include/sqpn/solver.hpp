#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "sqpn/compile.hpp"
#include "sqpn/lp.hpp"

namespace sqpn {

using Box = std::vector<Interval>;

enum class SolveStatus { converged, iteration_limit, infeasible };

std::string solve_status_name(SolveStatus s);

struct SolverOptions {
  double gap_tol = 1e-4;
  long max_nodes = 100000;
  double feas_tol = 1e-7;
  int refine_iters = 30;
  int multistart = 8;       // seeded starts for the root incumbent
  std::uint64_t seed = 1;
  double bound_safety = 2e-7;  // added to LP bounds so certificates stay outer
  std::ostream* progress = nullptr;
  long progress_period = 50;
};

struct SolveResult {
  double bound = 0.0;      // certified outer bound
  double incumbent = 0.0;  // value of the best feasible point found
  bool has_incumbent = false;
  Eigen::VectorXd point;
  double gap = 0.0;
  long nodes = 0;
  SolveStatus status = SolveStatus::iteration_limit;
};

using NodeObserver = std::function<void(long nodes, double bound, double incumbent, double gap)>;

/// Linear relaxation of the program over `box`: every degree-2 monomial u*v is
/// replaced by a product column constrained by the four McCormick envelopes;
/// degenerate variables are substituted as constants.
struct Relaxation {
  LinearProgram lp;
  struct Product {
    int u = -1;
    int v = -1;
    int col = -1;
  };
  std::vector<Product> products;
  std::vector<int> var_col;  // program var -> LP column, -1 when folded
  double obj_offset = 0.0;   // constant part folded out of the objective
};

Relaxation relax_mccormick(const MultilinearProgram& p, const Box& box);

/// Tightens the box through row normalization, definition sweeps and ratio
/// bounds. Returns false when some interval becomes empty (node infeasible).
bool propagate_boxes(const MultilinearProgram& p, Box& box);

/// Best-first spatial branch-and-bound with certified outer bounds, feasible
/// incumbents from local refinement, and branching on the largest envelope
/// violation (split point clamped to the middle 60% of the interval).
SolveResult solve(const MultilinearProgram& p, Sense sense, const SolverOptions& options = {},
                  const NodeObserver& observer = {});

/// Projection-based repair followed by coordinate ascent; returns a point
/// feasible within options.feas_tol or nothing.
std::optional<Eigen::VectorXd> local_refine(const MultilinearProgram& p, Sense sense,
                                            const Eigen::VectorXd& start,
                                            const SolverOptions& options = {});

}  // namespace sqpn
