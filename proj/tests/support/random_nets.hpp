#pragma once

// Deterministic random network generation shared by the unit and acceptance
// suites. Everything is a pure function of the seed.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sqpn/model.hpp"

namespace sqpn::testsupport {

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
  int below(int n) { return int(next() % std::uint64_t(n)); }
};

inline Eigen::VectorXd random_row(Rng& rng, int card) {
  Eigen::VectorXd row(card);
  for (int j = 0; j < card; ++j) row[j] = 0.05 + 0.9 * rng.uniform();
  row /= row.sum();
  return row;
}

// Fully numeric binary network with a random DAG; entries stay away from 0/1.
inline Network random_numeric_net(std::uint64_t seed, int max_nodes = 12) {
  Rng rng(seed);
  int n = 2 + rng.below(max_nodes - 1);
  Network net;
  for (int i = 0; i < n; ++i) {
    std::string name = "V" + std::to_string(i);
    net.add_variable(name, {name + "1", name + "0"});
  }
  for (int i = 1; i < n; ++i) {
    NodeSpec& spec = net.node(i);
    int parents = std::min(i, 1 + rng.below(2));
    while (int(spec.parents.size()) < parents) {
      int p = rng.below(i);
      if (std::find(spec.parents.begin(), spec.parents.end(), p) == spec.parents.end())
        spec.parents.push_back(p);
    }
  }
  for (int i = 0; i < n; ++i) {
    int configs = net.family_config_count(i);
    for (int k = 0; k < configs; ++k) net.node(i).numeric_rows[k] = random_row(rng, 2);
  }
  return net;
}

// Mixed network: mostly numeric with one or two qualitative nodes carrying
// relations; at most `max_free` free parameters. The relation kind rotates
// with the seed so a batch covers all six kinds.
inline Network random_mixed_sqpn(std::uint64_t seed, int max_free = 6) {
  Rng rng(seed);
  int n = 3 + rng.below(6);  // 3..8 nodes
  Network net;
  for (int i = 0; i < n; ++i) {
    std::string name = "V" + std::to_string(i);
    net.add_variable(name, {name + "1", name + "0"});
  }
  for (int i = 1; i < n; ++i) {
    NodeSpec& spec = net.node(i);
    int parents = std::min(i, 1 + rng.below(2));
    while (int(spec.parents.size()) < parents) {
      int p = rng.below(i);
      if (std::find(spec.parents.begin(), spec.parents.end(), p) == spec.parents.end())
        spec.parents.push_back(p);
    }
  }

  // one or two qualitative nodes, within the free-parameter budget
  std::vector<int> qualitative;
  int budget = max_free;
  {
    int candidate = 1 + rng.below(n - 1);
    int cost = net.family_config_count(candidate);
    if (cost <= budget) {
      qualitative.push_back(candidate);
      budget -= cost;
    } else {
      qualitative.push_back(0);
      budget -= 1;
    }
    if (budget >= 1 && rng.below(2) == 0) {
      int root = 0;
      if (std::find(qualitative.begin(), qualitative.end(), root) == qualitative.end()) {
        qualitative.push_back(root);
        budget -= 1;
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (std::find(qualitative.begin(), qualitative.end(), i) != qualitative.end()) continue;
    int configs = net.family_config_count(i);
    for (int k = 0; k < configs; ++k) net.node(i).numeric_rows[k] = random_row(rng, 2);
  }

  static const RelationKind kinds[6] = {
      RelationKind::influence,      RelationKind::additive_synergy,
      RelationKind::product_synergy, RelationKind::situational,
      RelationKind::weak,           RelationKind::strong};
  for (int q : qualitative) {
    NodeSpec& spec = net.node(q);
    spec.qualitative = true;
    if (spec.parents.empty()) continue;  // free root, no relations possible
    RelationKind kind = kinds[seed % 6];
    bool pairwise = spec.parents.size() >= 2;
    if (!pairwise && (kind == RelationKind::additive_synergy ||
                      kind == RelationKind::product_synergy))
      kind = RelationKind::influence;
    QualitativeRelation rel;
    rel.kind = kind;
    rel.sign = rng.below(2) == 0 ? Sign::positive : Sign::negative;
    switch (kind) {
      case RelationKind::additive_synergy:
      case RelationKind::product_synergy:
        rel.sources = {spec.parents[0], spec.parents[1]};
        rel.target_value = 0;
        break;
      case RelationKind::situational: {
        rel.sources = {spec.parents[0]};
        for (size_t m = 1; m < spec.parents.size(); ++m)
          rel.context[spec.parents[m]] = rng.below(2);
        break;
      }
      case RelationKind::weak:
        rel.sources = {spec.parents[rng.below(int(spec.parents.size()))]};
        rel.delta = 0.3 + 0.3 * rng.uniform();
        break;
      case RelationKind::strong:
        rel.sources = {spec.parents[rng.below(int(spec.parents.size()))]};
        rel.delta = 0.1 + 0.2 * rng.uniform();
        break;
      default:
        rel.sources = {spec.parents[rng.below(int(spec.parents.size()))]};
        if (rng.below(4) == 0) rel.sign = Sign::zero;
        break;
    }
    spec.relations.push_back(std::move(rel));
  }
  return net;
}

// Query with evidence on a numeric node, so P(e) stays bounded away from 0.
inline Query random_query(const Network& net, Rng& rng, bool want_evidence = true) {
  Query query;
  query.variable = rng.below(net.size());
  query.value = 0;
  if (!want_evidence) return query;
  std::vector<int> numeric;
  for (const auto& spec : net.nodes) {
    if (spec.variable == query.variable) continue;
    if (!spec.numeric_rows.empty()) numeric.push_back(spec.variable);
  }
  if (!numeric.empty()) {
    int e = numeric[size_t(rng.below(int(numeric.size())))];
    query.evidence[e] = rng.below(2);
  }
  return query;
}

}  // namespace sqpn::testsupport
