#include "sqpn/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "sqpn/constraints.hpp"
#include "sqpn/errors.hpp"

namespace sqpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

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

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

Counts count_statistics(const Dataset& data, const Network& net) {
  Counts counts;
  counts.n.resize(net.nodes.size());
  for (const auto& spec : net.nodes) {
    int configs = net.family_config_count(spec.variable);
    counts.n[size_t(spec.variable)].assign(
        size_t(configs), Eigen::VectorXd::Zero(net.var(spec.variable).cardinality()));
  }
  counts.total = double(data.records.size());
  std::vector<int> parent_values;
  for (const auto& record : data.records) {
    for (const auto& spec : net.nodes) {
      parent_values.clear();
      for (int p : spec.parents) parent_values.push_back(record[size_t(p)]);
      int k = net.parent_config_index(spec.variable, parent_values);
      counts.row(spec.variable, k)[record[size_t(spec.variable)]] += 1.0;
    }
  }
  return counts;
}

double log_likelihood(const Counts& counts,
                      const std::vector<std::map<int, Eigen::VectorXd>>& rows) {
  double ll = 0.0;
  for (size_t i = 0; i < counts.n.size(); ++i) {
    for (size_t k = 0; k < counts.n[i].size(); ++k) {
      const Eigen::VectorXd& n = counts.n[i][k];
      if (n.sum() <= 0) continue;
      auto it = rows[i].find(int(k));
      if (it == rows[i].end()) continue;
      for (int j = 0; j < n.size(); ++j)
        if (n[j] > 0) ll += n[j] * std::log(std::max(it->second[j], 1e-300));
    }
  }
  return ll;
}

Eigen::VectorXd posterior_mean(double s, const Eigen::VectorXd& tau,
                               const Eigen::VectorXd& counts) {
  if (s < 0) throw Error("dispersion hyperparameter must be nonnegative");
  if (counts.minCoeff() < 0) throw Error("negative count");
  double total = counts.sum();
  if (s == 0.0 && total == 0.0)
    throw Error("posterior mean undefined: s = 0 with no observations");
  if (s > 0) {
    if (tau.size() != counts.size()) throw Error("tau and counts must have equal length");
    if (std::abs(tau.sum() - 1.0) > 1e-9 || tau.minCoeff() < -1e-12)
      throw Error("tau must lie on the probability simplex");
  }
  Eigen::VectorXd out(counts.size());
  for (int j = 0; j < counts.size(); ++j)
    out[j] = (s * (tau.size() == counts.size() ? tau[j] : 0.0) + counts[j]) / (s + total);
  return out;
}

namespace {

// Per-node constrained likelihood maximization by projected gradient ascent.
struct NodeProblem {
  const Network& net;
  int node;
  std::vector<int> free_configs;
  std::map<int, int> offset_of;  // config -> slot offset
  int dim = 0;
  int card;
  std::vector<Interval> box;
  std::vector<MultilinearConstraint> constraints;  // over slot indices
  std::vector<Eigen::VectorXd> count_rows;         // aligned with free_configs

  NodeProblem(const Network& n, int i, const Counts& counts) : net(n), node(i) {
    const NodeSpec& spec = net.node(i);
    card = net.var(i).cardinality();
    int configs = net.family_config_count(i);
    for (int k = 0; k < configs; ++k) {
      if (spec.has_numeric(k)) continue;
      offset_of[k] = dim;
      free_configs.push_back(k);
      count_rows.push_back(counts.row(i, k));
      for (int j = 0; j < card; ++j) {
        Interval b{0.0, 1.0};
        auto iv = spec.interval_rows.find({j, k});
        if (iv != spec.interval_rows.end()) b = intersect(b, iv->second);
        box.push_back(b);
      }
      dim += card;
    }
    // compile this node's relations over the slots, with numeric rows folded
    ConstraintSet cs = compile_relations(net);
    for (const auto& c : cs.constraints) {
      if (c.group != ConstraintGroup::relation) continue;
      bool mine = true;
      MultilinearConstraint local = c;
      double shift = 0.0;
      std::vector<Monomial> kept;
      for (auto& m : local.terms) {
        std::vector<int> slots;
        double coeff = m.coeff;
        for (int v : m.vars) {
          const ParamVar& pv = cs.vars[size_t(v)];
          if (pv.node != i) {
            mine = false;
            break;
          }
          auto it = offset_of.find(pv.config);
          if (it == offset_of.end()) {
            coeff *= net.node(i).numeric_rows.at(pv.config)[pv.value];  // fixed assessment
          } else {
            slots.push_back(it->second + pv.value);
          }
        }
        if (!mine) break;
        if (slots.empty())
          shift += coeff;
        else
          kept.push_back({coeff, slots});
      }
      if (!mine) continue;
      local.terms = std::move(kept);
      local.rhs -= shift;
      constraints.push_back(std::move(local));
    }
  }

  double log_lik(const Eigen::VectorXd& x) const {
    double ll = 0.0;
    for (size_t r = 0; r < free_configs.size(); ++r)
      for (int j = 0; j < card; ++j) {
        double n = count_rows[r][j];
        if (n > 0) ll += n * std::log(std::max(x[int(r) * card + j], 1e-300));
      }
    return ll;
  }

  double violation(const Eigen::VectorXd& x) const {
    double worst = 0.0;
    for (size_t r = 0; r < free_configs.size(); ++r) {
      double sum = 0.0;
      for (int j = 0; j < card; ++j) {
        double v = x[int(r) * card + j];
        worst = std::max(worst, box[size_t(int(r) * card + j)].lo - v);
        worst = std::max(worst, v - box[size_t(int(r) * card + j)].hi);
        sum += v;
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    for (const auto& c : constraints) {
      double lhs = 0.0;
      for (const auto& m : c.terms) {
        double v = m.coeff;
        for (int s : m.vars) v *= x[s];
        lhs += v;
      }
      switch (c.cmp) {
        case Cmp::le: worst = std::max(worst, lhs - c.rhs); break;
        case Cmp::ge: worst = std::max(worst, c.rhs - lhs); break;
        case Cmp::eq: worst = std::max(worst, std::abs(lhs - c.rhs)); break;
      }
    }
    return worst;
  }

  void project_rows(Eigen::VectorXd& x) const {
    for (size_t r = 0; r < free_configs.size(); ++r) {
      int base = int(r) * card;
      double lo_shift = -2.0, hi_shift = 2.0;
      auto mass = [&](double shift) {
        double total = 0.0;
        for (int j = 0; j < card; ++j)
          total += std::clamp(x[base + j] + shift, box[size_t(base + j)].lo,
                              box[size_t(base + j)].hi);
        return total;
      };
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo_shift + hi_shift);
        if (mass(mid) < 1.0)
          lo_shift = mid;
        else
          hi_shift = mid;
      }
      double shift = 0.5 * (lo_shift + hi_shift);
      for (int j = 0; j < card; ++j)
        x[base + j] =
            std::clamp(x[base + j] + shift, box[size_t(base + j)].lo, box[size_t(base + j)].hi);
    }
  }

  bool repair(Eigen::VectorXd& x, int iters = 80, double target = 1e-12) const {
    for (int it = 0; it < iters; ++it) {
      project_rows(x);
      if (violation(x) <= target) return true;
      for (const auto& c : constraints) {
        double lhs = 0.0;
        for (const auto& m : c.terms) {
          double v = m.coeff;
          for (int s : m.vars) v *= x[s];
          lhs += v;
        }
        bool violated = (c.cmp == Cmp::le && lhs > c.rhs + 1e-13) ||
                        (c.cmp == Cmp::ge && lhs < c.rhs - 1e-13) ||
                        (c.cmp == Cmp::eq && std::abs(lhs - c.rhs) > 1e-13);
        if (!violated) continue;
        std::map<int, double> grad;
        for (const auto& m : c.terms) {
          if (m.vars.size() == 1) {
            grad[m.vars[0]] += m.coeff;
          } else if (m.vars.size() == 2) {
            grad[m.vars[0]] += m.coeff * x[m.vars[1]];
            grad[m.vars[1]] += m.coeff * x[m.vars[0]];
          }
        }
        double norm2 = 0.0;
        for (const auto& [s, g] : grad) norm2 += g * g;
        if (norm2 <= 1e-18) continue;
        double step = (lhs - c.rhs) / norm2;
        for (const auto& [s, g] : grad) x[s] -= step * g;
      }
    }
    project_rows(x);
    return violation(x) <= 1e-9;
  }

  // projected gradient ascent with backtracking
  double ascend(Eigen::VectorXd& x, int iterations) const {
    if (!repair(x)) return -kInf;
    double value = log_lik(x);
    double step = 0.1;
    for (int it = 0; it < iterations; ++it) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
      for (size_t r = 0; r < free_configs.size(); ++r)
        for (int j = 0; j < card; ++j) {
          double n = count_rows[r][j];
          if (n > 0) grad[int(r) * card + j] = n / std::max(x[int(r) * card + j], 1e-9);
        }
      double norm = grad.norm();
      if (norm <= 1e-14) break;
      bool accepted = false;
      double trial_step = step;
      for (int bt = 0; bt < 12; ++bt) {
        Eigen::VectorXd trial = x + (trial_step / norm) * grad;
        if (repair(trial, 40)) {
          double tval = log_lik(trial);
          if (tval > value + 1e-12) {
            x = std::move(trial);
            value = tval;
            step = std::min(trial_step * 1.5, 0.5);
            accepted = true;
            break;
          }
        }
        trial_step *= 0.5;
      }
      if (!accepted) {
        step *= 0.5;
        if (step < 1e-10) break;
      }
    }
    return value;
  }
};

}  // namespace

MlResult fit_ml(const Network& net, const Counts& counts, const MlOptions& options) {
  MlResult result;
  result.estimates.resize(net.nodes.size());
  Rng rng(options.seed);

  for (const auto& spec : net.nodes) {
    int i = spec.variable;
    int card = net.var(i).cardinality();
    int configs = net.family_config_count(i);
    for (const auto& [k, row] : spec.numeric_rows) result.estimates[size_t(i)][k] = row;

    std::vector<int> free_configs;
    for (int k = 0; k < configs; ++k)
      if (!spec.has_numeric(k)) free_configs.push_back(k);
    if (free_configs.empty()) continue;

    for (int k : free_configs) {
      if (counts.row(i, k).sum() <= 0)
        result.warnings.push_back("node " + net.var(i).name + " config " + std::to_string(k) +
                                  ": no observations, likelihood is flat on this row");
    }

    bool constrained = !spec.relations.empty() || !spec.interval_rows.empty();
    if (!constrained) {
      for (int k : free_configs) {
        const Eigen::VectorXd& n = counts.row(i, k);
        double total = n.sum();
        Eigen::VectorXd row(card);
        if (total > 0)
          row = n / total;
        else
          row.setConstant(1.0 / card);
        result.estimates[size_t(i)][k] = row;
      }
      continue;
    }

    NodeProblem problem(net, i, counts);
    double best = -kInf;
    Eigen::VectorXd best_x;
    for (int start = 0; start < options.multistart; ++start) {
      Eigen::VectorXd x(problem.dim);
      if (start == 0) {
        for (size_t r = 0; r < problem.free_configs.size(); ++r) {
          const Eigen::VectorXd& n = problem.count_rows[r];
          double total = n.sum();
          for (int j = 0; j < card; ++j)
            x[int(r) * card + j] = total > 0 ? n[j] / total : 1.0 / card;
        }
      } else if (start == 1) {
        x.setConstant(1.0 / card);
      } else {
        for (int s = 0; s < problem.dim; ++s) x[s] = rng.uniform();
      }
      double value = problem.ascend(x, options.iterations);
      if (value > best) {
        best = value;
        best_x = x;
      }
    }
    if (best == -kInf) throw Error("no feasible point found for node " + net.var(i).name);
    for (size_t r = 0; r < problem.free_configs.size(); ++r) {
      Eigen::VectorXd row(card);
      for (int j = 0; j < card; ++j) row[j] = best_x[int(r) * card + j];
      result.estimates[size_t(i)][problem.free_configs[r]] = row;
    }
  }

  result.log_likelihood = log_likelihood(counts, result.estimates);
  return result;
}

CredalNetwork fit_idm(const Network& net, const Counts& counts, const IdmConfig& config) {
  if (config.s <= 0) throw Error("dispersion hyperparameter s must be positive");
  CredalNetwork credal{net};
  Network& out = credal.network;

  for (auto& spec : out.nodes) {
    int i = spec.variable;
    int card = net.var(i).cardinality();
    int configs = net.family_config_count(i);
    spec.idm_rows.clear();
    for (int k = 0; k < configs; ++k) {
      if (spec.has_numeric(k) || spec.tau_rows.count(k)) {
        // numeric assessment: single Dirichlet prior centered at tau
        Eigen::VectorXd tau = spec.tau_rows.count(k) ? spec.tau_rows.at(k)
                                                     : spec.numeric_rows.at(k);
        spec.numeric_rows[k] = posterior_mean(config.s, tau, counts.row(i, k));
      } else {
        IdmRow row;
        row.s = config.s;
        row.counts = counts.row(i, k);
        spec.idm_rows[k] = row;
        (void)card;
      }
    }
    spec.tau_rows.clear();
  }
  return credal;
}

std::vector<std::string> idm_expressions(const Network& net, int node, int config) {
  const NodeSpec& spec = net.node(node);
  auto it = spec.idm_rows.find(config);
  if (it == spec.idm_rows.end()) throw Error("node has no learned credal row at this config");
  const IdmRow& row = it->second;
  std::vector<std::string> out;
  std::vector<int> parent_values = net.parent_config_values(node, config);
  std::string ctx;
  for (size_t m = 0; m < spec.parents.size(); ++m) {
    if (m) ctx += ",";
    ctx += net.var(spec.parents[m]).value_names[size_t(parent_values[m])];
  }
  for (int j = 0; j < net.var(node).cardinality(); ++j) {
    std::string t = "t[" + net.var(node).value_names[size_t(j)] + "|" + ctx + "]";
    out.push_back("(" + fmt(row.s) + "*" + t + " + " + fmt(row.counts[j]) + ")/" +
                  fmt(row.denominator()));
  }
  return out;
}

}  // namespace sqpn
