#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "sqpn/constraints.hpp"
#include "sqpn/formula.hpp"
#include "sqpn/learn.hpp"
#include "sqpn/model.hpp"

namespace sqpn {

// Brute-force ground truth, deliberately independent of the compile/solver
// path: joint enumeration instead of bucket elimination, and direct evaluation
// of the defining inequalities instead of compiled constraint sets.

struct GridSpec {
  double step = 0.02;
  int refine_rounds = 3;
  int threads = 1;
};

enum class QueryKind { marginal, conditional, influence };

/// Exact P(q|e) (or P(q) without evidence) by summing the joint distribution.
/// Requires a fully numeric network; throws Error when P(e) = 0.
double numeric_ve(const Network& net, const Query& query);

/// P(q|e) - P(q).
double numeric_influence(const Network& net, const Query& query);

/// The free parameters of a network: one entry per family row that is not
/// pinned numerically (theta rows, or t rows of learned credal nodes).
struct FreeParams {
  struct Row {
    int node = -1;
    int config = -1;
    VarRole role = VarRole::theta;
    int dim = 0;
    std::vector<Interval> box;
    int offset = 0;  // position in the flat point vector
    int rep = -1;    // union-find representative for zero-sign merged rows
  };
  std::vector<Row> rows;
  int point_dim = 0;
  int free_count() const;  // representatives only, (dim - 1) each
};

FreeParams free_parameters(const Network& net);

/// Full numeric row tables induced by a free-parameter point (learned credal
/// rows are materialized through their affine expressions).
std::vector<std::map<int, Eigen::VectorXd>> materialize_rows(const Network& net,
                                                             const FreeParams& params,
                                                             const Eigen::VectorXd& point);

Network materialize_network(const Network& net, const FreeParams& params,
                            const Eigen::VectorXd& point);

/// Largest violation of the defining relation inequalities, interval rows and
/// logic assessments at the materialized tables.
double direct_violation(const Network& net, const FreeParams& params,
                        const Eigen::VectorXd& point);

/// Rejection-sampled feasible free-parameter points; deterministic in seed.
std::vector<Eigen::VectorXd> sample_feasible(const Network& net, const FreeParams& params,
                                             int count, std::uint64_t seed,
                                             int max_tries = 200000, double tol = 1e-9);

/// Enumerates the free-parameter grid, filters by feasibility (tolerance
/// scaled with the step; zero-sign influence equalities are substituted, not
/// filtered), evaluates the query on each surviving point and refines around
/// the extremes. Throws Error when no feasible grid point exists.
Interval grid_bounds(const Network& net, const Query& query, QueryKind kind, const GridSpec& grid);

struct GridMlResult {
  std::vector<std::map<int, Eigen::VectorXd>> estimates;
  double log_likelihood = 0.0;
};

/// Best feasible grid point by log-likelihood, then coordinate refinement at
/// step/10 per round.
GridMlResult grid_ml(const Network& net, const Counts& counts, const GridSpec& grid);

/// Is there an assignment of the first k variables (sorted by name) under
/// which a strict majority of completions satisfies the formula?
bool emajsat_brute(const BooleanFormula& phi, int k);

}  // namespace sqpn
