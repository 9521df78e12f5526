#include "sqpn/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "sqpn/errors.hpp"

namespace sqpn {

char sign_symbol(Sign s) {
  switch (s) {
    case Sign::positive: return '+';
    case Sign::negative: return '-';
    case Sign::zero: return '0';
    case Sign::ambiguous: return '?';
  }
  return '?';
}

Sign sign_from_symbol(char c) {
  switch (c) {
    case '+': return Sign::positive;
    case '-': return Sign::negative;
    case '0': return Sign::zero;
    case '?': return Sign::ambiguous;
  }
  throw ParseError(std::string("unknown sign symbol '") + c + "'");
}

std::string sign_word(Sign s) {
  switch (s) {
    case Sign::positive: return "positive";
    case Sign::negative: return "negative";
    case Sign::zero: return "zero";
    case Sign::ambiguous: return "ambiguous";
  }
  return "ambiguous";
}

std::string relation_kind_name(RelationKind k) {
  switch (k) {
    case RelationKind::influence: return "influence";
    case RelationKind::additive_synergy: return "additive-synergy";
    case RelationKind::product_synergy: return "product-synergy";
    case RelationKind::situational: return "situational";
    case RelationKind::weak: return "weak";
    case RelationKind::strong: return "strong";
  }
  return "influence";
}

bool NodeSpec::has_interval_at(int k) const {
  for (const auto& [jk, iv] : interval_rows) {
    (void)iv;
    if (jk.second == k) return true;
  }
  return false;
}

int Network::add_variable(const std::string& name, std::vector<std::string> values) {
  Variable v;
  v.id = static_cast<int>(variables.size());
  v.name = name;
  v.value_names = std::move(values);
  variables.push_back(v);
  NodeSpec spec;
  spec.variable = v.id;
  nodes.push_back(std::move(spec));
  return v.id;
}

int Network::variable_index(const std::string& name) const {
  for (const auto& v : variables)
    if (v.name == name) return v.id;
  return -1;
}

int Network::family_config_count(int id) const {
  int count = 1;
  for (int p : node(id).parents) count *= var(p).cardinality();
  return count;
}

int Network::parent_config_index(int id, const std::vector<int>& parent_values) const {
  const auto& parents = node(id).parents;
  int k = 0;
  for (size_t m = 0; m < parents.size(); ++m) {
    k = k * var(parents[m]).cardinality() + parent_values[m];
  }
  return k;
}

std::vector<int> Network::parent_config_values(int id, int config) const {
  const auto& parents = node(id).parents;
  std::vector<int> values(parents.size(), 0);
  for (size_t m = parents.size(); m-- > 0;) {
    int card = var(parents[m]).cardinality();
    values[m] = config % card;
    config /= card;
  }
  return values;
}

bool Network::fully_numeric() const {
  for (const auto& spec : nodes) {
    int configs = family_config_count(spec.variable);
    for (int k = 0; k < configs; ++k)
      if (!spec.has_numeric(k)) return false;
  }
  return true;
}

std::string ValidationReport::str() const {
  std::ostringstream out;
  for (const auto& v : violations) out << v << "\n";
  return out.str();
}

namespace {

bool binary(const Network& net, int id) { return net.var(id).cardinality() == 2; }

void check_relations(const Network& net, const NodeSpec& spec, ValidationReport& report) {
  const std::string owner = net.var(spec.variable).name;
  for (const auto& rel : spec.relations) {
    const std::string where = relation_kind_name(rel.kind) + " on node " + owner;
    size_t expected = (rel.kind == RelationKind::additive_synergy ||
                       rel.kind == RelationKind::product_synergy)
                          ? 2
                          : 1;
    if (rel.sources.size() != expected) {
      report.violations.push_back(where + ": expected " + std::to_string(expected) +
                                  " source variable(s)");
      continue;
    }
    bool sources_ok = true;
    for (int s : rel.sources) {
      if (s < 0 || s >= net.size() ||
          std::find(spec.parents.begin(), spec.parents.end(), s) == spec.parents.end()) {
        report.violations.push_back(where + ": relation source is not a parent");
        sources_ok = false;
      }
    }
    if (!sources_ok) continue;
    if (!binary(net, spec.variable)) {
      report.violations.push_back(where + ": qualitative relation on non-binary variable");
      continue;
    }
    for (int s : rel.sources) {
      if (!binary(net, s))
        report.violations.push_back(where + ": qualitative relation on non-binary variable " +
                                    net.var(s).name);
    }
    if (rel.kind == RelationKind::weak || rel.kind == RelationKind::strong) {
      if (rel.sign == Sign::zero)
        report.violations.push_back(where + ": weak/strong influence requires sign + or -");
      if (!(rel.delta >= 0.0 && rel.delta <= 1.0))
        report.violations.push_back(where + ": delta must lie in [0,1]");
    }
    if (rel.kind == RelationKind::product_synergy) {
      if (rel.target_value < 0 || rel.target_value >= net.var(spec.variable).cardinality())
        report.violations.push_back(where + ": target value out of range");
    }
    if (rel.kind == RelationKind::situational) {
      std::set<int> others(spec.parents.begin(), spec.parents.end());
      others.erase(rel.sources[0]);
      std::set<int> given;
      for (const auto& [v, val] : rel.context) {
        given.insert(v);
        if (!others.count(v)) {
          report.violations.push_back(where + ": context variable " + net.var(v).name +
                                      " is not a remaining parent");
        } else if (val < 0 || val >= net.var(v).cardinality()) {
          report.violations.push_back(where + ": context value out of range for " +
                                      net.var(v).name);
        }
      }
      if (given != others)
        report.violations.push_back(where +
                                    ": context must instantiate every remaining parent");
    }
  }
}

}  // namespace

ValidationReport validate_network(const Network& net) {
  ValidationReport report;
  std::set<std::string> names;
  for (const auto& v : net.variables) {
    if (!names.insert(v.name).second)
      report.violations.push_back("duplicate variable name " + v.name);
    if (v.cardinality() < 2)
      report.violations.push_back("variable " + v.name + " must have cardinality >= 2");
    std::set<std::string> value_names(v.value_names.begin(), v.value_names.end());
    if (value_names.size() != v.value_names.size())
      report.violations.push_back("variable " + v.name + " has duplicate value names");
  }
  if (net.nodes.size() != net.variables.size()) {
    report.violations.push_back("every variable needs exactly one node specification");
    return report;
  }

  for (const auto& spec : net.nodes) {
    const std::string owner = net.var(spec.variable).name;
    std::set<int> seen;
    for (int p : spec.parents) {
      if (p < 0 || p >= net.size()) {
        report.violations.push_back("node " + owner + ": parent reference out of range");
      } else if (!seen.insert(p).second) {
        report.violations.push_back("node " + owner + ": duplicate parent " + net.var(p).name);
      }
    }
  }

  // cycle check (Kahn)
  {
    std::vector<int> indegree(net.nodes.size(), 0);
    for (const auto& spec : net.nodes)
      for (int p : spec.parents)
        if (p >= 0 && p < net.size()) indegree[size_t(spec.variable)]++;
    std::deque<int> ready;
    for (int i = 0; i < net.size(); ++i)
      if (indegree[size_t(i)] == 0) ready.push_back(i);
    int emitted = 0;
    std::vector<std::vector<int>> children(net.nodes.size());
    for (const auto& spec : net.nodes)
      for (int p : spec.parents)
        if (p >= 0 && p < net.size()) children[size_t(p)].push_back(spec.variable);
    while (!ready.empty()) {
      int v = ready.front();
      ready.pop_front();
      ++emitted;
      for (int c : children[size_t(v)])
        if (--indegree[size_t(c)] == 0) ready.push_back(c);
    }
    if (emitted != net.size()) report.violations.push_back("graph contains a cycle");
  }

  for (const auto& spec : net.nodes) {
    const std::string owner = net.var(spec.variable).name;
    int card = net.var(spec.variable).cardinality();
    int configs = net.family_config_count(spec.variable);
    for (const auto& [k, row] : spec.numeric_rows) {
      if (k < 0 || k >= configs) {
        report.violations.push_back("node " + owner + ": cpt row for unknown parent config");
        continue;
      }
      if (row.size() != card) {
        report.violations.push_back("node " + owner + ": cpt row has wrong length");
        continue;
      }
      double sum = row.sum();
      if (std::abs(sum - 1.0) > 1e-9)
        report.violations.push_back("node " + owner + ": cpt row does not sum to 1 (sum=" +
                                    std::to_string(sum) + ")");
      for (int j = 0; j < card; ++j)
        if (row[j] < -1e-12 || row[j] > 1.0 + 1e-12)
          report.violations.push_back("node " + owner + ": cpt entry outside [0,1]");
    }
    for (const auto& [jk, iv] : spec.interval_rows) {
      auto [j, k] = jk;
      if (j < 0 || j >= card || k < 0 || k >= configs) {
        report.violations.push_back("node " + owner + ": interval for unknown value or config");
        continue;
      }
      if (iv.lo > iv.hi || iv.lo < -1e-12 || iv.hi > 1.0 + 1e-12)
        report.violations.push_back("node " + owner + ": interval must satisfy 0 <= lo <= hi <= 1");
      if (spec.has_numeric(k))
        report.violations.push_back("node " + owner +
                                    ": row has both a cpt entry and an interval assessment");
    }
    for (const auto& [k, row] : spec.idm_rows) {
      if (k < 0 || k >= configs)
        report.violations.push_back("node " + owner + ": credal row for unknown parent config");
      else if (row.counts.size() != card || row.s <= 0.0 || row.counts.minCoeff() < 0.0)
        report.violations.push_back("node " + owner + ": malformed credal row");
    }
    check_relations(net, spec, report);

    bool anyspec = spec.qualitative || !spec.relations.empty() || spec.is_idm();
    for (int k = 0; k < configs && !anyspec; ++k) {
      if (!spec.has_numeric(k) && !spec.has_interval_at(k)) {
        report.violations.push_back("node " + owner + ": parent configuration " +
                                    std::to_string(k) +
                                    " has neither numeric rows nor relations");
        break;
      }
    }
  }
  return report;
}

std::vector<int> topological_order(const Network& net) {
  std::vector<int> indegree(net.nodes.size(), 0);
  std::vector<std::vector<int>> children(net.nodes.size());
  for (const auto& spec : net.nodes) {
    indegree[size_t(spec.variable)] = static_cast<int>(spec.parents.size());
    for (int p : spec.parents) children[size_t(p)].push_back(spec.variable);
  }
  std::deque<int> ready;
  for (int i = 0; i < net.size(); ++i)
    if (indegree[size_t(i)] == 0) ready.push_back(i);
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (int c : children[size_t(v)])
      if (--indegree[size_t(c)] == 0) ready.push_back(c);
  }
  if (order.size() != net.nodes.size()) throw ValidationError("graph contains a cycle");
  return order;
}

}  // namespace sqpn
