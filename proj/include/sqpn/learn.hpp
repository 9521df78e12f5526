#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "sqpn/model.hpp"

namespace sqpn {

struct Dataset {
  std::vector<std::vector<int>> records;  // records[r][variable id] = value index
};

/// Sufficient statistics: n[i][k][j] counts records with X_i = j and parents
/// of X_i in configuration k.
struct Counts {
  double total = 0;
  std::vector<std::vector<Eigen::VectorXd>> n;
  Eigen::VectorXd& row(int node, int config) { return n[size_t(node)][size_t(config)]; }
  const Eigen::VectorXd& row(int node, int config) const { return n[size_t(node)][size_t(config)]; }
};

Counts count_statistics(const Dataset& data, const Network& net);

struct MlOptions {
  int multistart = 32;
  int iterations = 400;
  std::uint64_t seed = 7;
};

struct MlResult {
  std::vector<std::map<int, Eigen::VectorXd>> estimates;  // per node: config -> row
  std::vector<std::string> warnings;                      // flat-likelihood rows etc.
  double log_likelihood = 0.0;
};

/// Constrained maximum likelihood, decomposed per node: unconstrained nodes
/// get relative frequencies; nodes with relations or interval rows are solved
/// by multistart projected gradient ascent on the log-likelihood.
MlResult fit_ml(const Network& net, const Counts& counts, const MlOptions& options = {});

struct IdmConfig {
  double s = 2.0;  // dispersion hyperparameter
};

/// Network whose constrained nodes carry affine-in-t parameter expressions
/// plus the transplanted qualitative constraints on t.
struct CredalNetwork {
  Network network;
};

/// Numeric rows become posterior means under a Dirichlet prior centered at the
/// stated probabilities; qualitative rows become affine expressions in free
/// hyperparameters t with the node's relations now constraining t.
CredalNetwork fit_idm(const Network& net, const Counts& counts, const IdmConfig& config = {});

/// (s * tau + counts) / (s + counts.sum()), componentwise.
Eigen::VectorXd posterior_mean(double s, const Eigen::VectorXd& tau, const Eigen::VectorXd& counts);

/// Human-readable affine expressions of a learned credal row, one per value.
std::vector<std::string> idm_expressions(const Network& net, int node, int config);

/// Log-likelihood of point estimates under counts; 0*log(0) counts as 0.
double log_likelihood(const Counts& counts, const std::vector<std::map<int, Eigen::VectorXd>>& rows);

}  // namespace sqpn
