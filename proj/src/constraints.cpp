#include "sqpn/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "sqpn/errors.hpp"

namespace sqpn {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string ParamVar::name() const {
  switch (role) {
    case VarRole::theta:
      return "theta[" + std::to_string(node) + "][" + std::to_string(value) + "][" +
             std::to_string(config) + "]";
    case VarRole::hyper_t:
      return "t[" + std::to_string(node) + "][" + std::to_string(value) + "][" +
             std::to_string(config) + "]";
    case VarRole::message:
      return "m[" + std::to_string(node) + "][" + std::to_string(value) + "]";
    case VarRole::auxiliary:
      return "aux[" + std::to_string(node) + "]";
  }
  return "?";
}

int ConstraintSet::add_var(VarRole role, int a, int b, int c, Interval box) {
  ParamVar v;
  v.id = static_cast<int>(vars.size());
  v.role = role;
  v.node = a;
  v.value = b;
  v.config = c;
  v.box = box;
  vars.push_back(v);
  if (role == VarRole::theta) theta_ids_[{a, b, c}] = v.id;
  if (role == VarRole::hyper_t) t_ids_[{a, b, c}] = v.id;
  return v.id;
}

void ConstraintSet::add_constraint(MultilinearConstraint c) {
  // canonicalize: sort variables inside monomials, merge like terms, drop zeros
  std::map<std::vector<int>, double> merged;
  for (auto& m : c.terms) {
    std::sort(m.vars.begin(), m.vars.end());
    merged[m.vars] += m.coeff;
  }
  c.terms.clear();
  for (const auto& [vars, coeff] : merged) {
    if (std::abs(coeff) <= 1e-15) continue;
    c.terms.push_back(Monomial{coeff, vars});
  }
  if (c.terms.empty() && std::abs(c.rhs) <= 1e-15) return;  // trivially satisfied
  constraints.push_back(std::move(c));
}

int ConstraintSet::theta(int node, int value, int config) const {
  auto it = theta_ids_.find({node, value, config});
  return it == theta_ids_.end() ? -1 : it->second;
}

int ConstraintSet::hyper(int node, int value, int config) const {
  auto it = t_ids_.find({node, value, config});
  return it == t_ids_.end() ? -1 : it->second;
}

void idm_affine(const IdmRow& row, int value, double* scale, double* offset) {
  double d = row.denominator();
  *scale = row.s / d;
  *offset = row.counts[value] / d;
}

namespace {

struct Options {
  bool relations = true;
  bool intervals = true;
};

void declare_and_structure(const Network& net, ConstraintSet& cs, const Options& opt) {
  for (const auto& spec : net.nodes) {
    int i = spec.variable;
    int card = net.var(i).cardinality();
    int configs = net.family_config_count(i);
    for (int k = 0; k < configs; ++k) {
      if (spec.has_numeric(k)) {
        const auto& row = spec.numeric_rows.at(k);
        for (int j = 0; j < card; ++j) cs.add_var(VarRole::theta, i, j, k, {row[j], row[j]});
        continue;
      }
      auto idm = spec.idm_rows.find(k);
      if (idm != spec.idm_rows.end()) {
        // t on the simplex; theta pinned to an affine image of t
        std::vector<int> tvars, thvars;
        for (int j = 0; j < card; ++j) {
          Interval tbox{0.0, 1.0};
          if (opt.intervals) {
            auto iv = spec.interval_rows.find({j, k});
            if (iv != spec.interval_rows.end()) {
              if (iv->second.lo > iv->second.hi)
                throw ValidationError("interval with lo > hi on node " + net.var(i).name);
              tbox = intersect(tbox, iv->second);
            }
          }
          tvars.push_back(cs.add_var(VarRole::hyper_t, i, j, k, tbox));
        }
        for (int j = 0; j < card; ++j) {
          double scale, offset;
          idm_affine(idm->second, j, &scale, &offset);
          Interval box{scale * cs.box(tvars[size_t(j)]).lo + offset,
                       scale * cs.box(tvars[size_t(j)]).hi + offset};
          thvars.push_back(cs.add_var(VarRole::theta, i, j, k, box));
        }
        MultilinearConstraint simplex;
        simplex.group = ConstraintGroup::normalization;
        simplex.cmp = Cmp::eq;
        simplex.rhs = 1.0;
        for (int v : tvars) simplex.terms.push_back({1.0, {v}});
        simplex.tag = "simplex t " + net.var(i).name + " k=" + std::to_string(k);
        cs.add_constraint(std::move(simplex));
        for (int j = 0; j < card; ++j) {
          double scale, offset;
          idm_affine(idm->second, j, &scale, &offset);
          MultilinearConstraint link;
          link.group = ConstraintGroup::definition;
          link.defined_var = thvars[size_t(j)];
          link.cmp = Cmp::eq;
          link.rhs = offset;
          link.terms.push_back({1.0, {thvars[size_t(j)]}});
          link.terms.push_back({-scale, {tvars[size_t(j)]}});
          link.tag = "credal link " + cs.vars[size_t(thvars[size_t(j)])].name();
          cs.add_constraint(std::move(link));
        }
        continue;
      }
      // free row, possibly tightened by interval assessments
      std::vector<int> vars;
      for (int j = 0; j < card; ++j) {
        Interval box{0.0, 1.0};
        if (opt.intervals) {
          auto iv = spec.interval_rows.find({j, k});
          if (iv != spec.interval_rows.end()) {
            if (iv->second.lo > iv->second.hi)
              throw ValidationError("interval with lo > hi on node " + net.var(i).name);
            box = intersect(box, iv->second);
          }
        }
        vars.push_back(cs.add_var(VarRole::theta, i, j, k, box));
      }
      MultilinearConstraint norm;
      norm.group = ConstraintGroup::normalization;
      norm.cmp = Cmp::eq;
      norm.rhs = 1.0;
      for (int v : vars) norm.terms.push_back({1.0, {v}});
      norm.tag = "normalize " + net.var(i).name + " k=" + std::to_string(k);
      cs.add_constraint(std::move(norm));
    }
  }
}

// Variable id carrying the constrained quantity at (node, value, config):
// theta normally, t for learned credal rows.
int family_var(const Network& net, const ConstraintSet& cs, int node, int value, int config) {
  if (net.node(node).idm_rows.count(config)) return cs.hyper(node, value, config);
  return cs.theta(node, value, config);
}

Cmp sign_cmp(Sign s) {
  switch (s) {
    case Sign::positive: return Cmp::ge;
    case Sign::negative: return Cmp::le;
    case Sign::zero: return Cmp::eq;
    case Sign::ambiguous: break;
  }
  return Cmp::eq;
}

// Enumerates full parent configurations grouped by the values of the listed
// source positions; callback receives the config index for each combination
// of source values, once per instantiation of the remaining parents.
template <typename F>
void for_each_context(const Network& net, int node, const std::vector<size_t>& source_pos,
                      F&& fn) {
  const auto& parents = net.node(node).parents;
  std::vector<size_t> rest;
  for (size_t m = 0; m < parents.size(); ++m)
    if (std::find(source_pos.begin(), source_pos.end(), m) == source_pos.end())
      rest.push_back(m);
  std::vector<int> values(parents.size(), 0);
  size_t combos = 1;
  for (size_t m : rest) combos *= size_t(net.var(parents[m]).cardinality());
  for (size_t c = 0; c < combos; ++c) {
    size_t rem = c;
    for (size_t idx = rest.size(); idx-- > 0;) {
      int card = net.var(parents[rest[idx]]).cardinality();
      values[rest[idx]] = int(rem % size_t(card));
      rem /= size_t(card);
    }
    fn(values);
  }
}

void compile_node_relations(const Network& net, int node, ConstraintSet& cs) {
  const NodeSpec& spec = net.node(node);
  const auto& parents = spec.parents;
  for (const auto& rel : spec.relations) {
    if (rel.sign == Sign::ambiguous) continue;  // no monotone information
    std::vector<size_t> source_pos;
    for (int s : rel.sources)
      source_pos.push_back(size_t(std::find(parents.begin(), parents.end(), s) - parents.begin()));
    std::string base = relation_kind_name(rel.kind) + " " + sign_word(rel.sign) + " " +
                       net.var(node).name;

    auto pair_constraint = [&](const std::vector<int>& ctx_values, Cmp cmp, double rhs,
                               const std::string& tag) {
      std::vector<int> hi = ctx_values, lo = ctx_values;
      hi[source_pos[0]] = 0;
      lo[source_pos[0]] = 1;
      int k_hi = net.parent_config_index(node, hi);
      int k_lo = net.parent_config_index(node, lo);
      MultilinearConstraint c;
      c.group = ConstraintGroup::relation;
      c.cmp = cmp;
      c.rhs = rhs;
      c.terms.push_back({1.0, {family_var(net, cs, node, 0, k_hi)}});
      c.terms.push_back({-1.0, {family_var(net, cs, node, 0, k_lo)}});
      c.tag = tag;
      cs.add_constraint(std::move(c));
    };

    switch (rel.kind) {
      case RelationKind::influence:
        for_each_context(net, node, source_pos, [&](const std::vector<int>& ctx) {
          pair_constraint(ctx, sign_cmp(rel.sign), 0.0, base);
        });
        break;
      case RelationKind::situational: {
        std::vector<int> ctx(parents.size(), 0);
        for (size_t m = 0; m < parents.size(); ++m) {
          auto it = rel.context.find(parents[m]);
          if (it != rel.context.end()) ctx[m] = it->second;
        }
        pair_constraint(ctx, sign_cmp(rel.sign), 0.0, base + " @context");
        break;
      }
      case RelationKind::weak:
        for_each_context(net, node, source_pos, [&](const std::vector<int>& ctx) {
          if (rel.sign == Sign::positive) {
            pair_constraint(ctx, Cmp::ge, 0.0, base);
            pair_constraint(ctx, Cmp::le, rel.delta, base + " cutoff");
          } else {
            pair_constraint(ctx, Cmp::le, 0.0, base);
            pair_constraint(ctx, Cmp::ge, -rel.delta, base + " cutoff");
          }
        });
        break;
      case RelationKind::strong:
        for_each_context(net, node, source_pos, [&](const std::vector<int>& ctx) {
          if (rel.sign == Sign::positive)
            pair_constraint(ctx, Cmp::ge, rel.delta, base);
          else
            pair_constraint(ctx, Cmp::le, -rel.delta, base);
        });
        break;
      case RelationKind::additive_synergy:
        for_each_context(net, node, source_pos, [&](const std::vector<int>& ctx) {
          std::vector<int> ab = ctx, AB = ctx, Ab = ctx, aB = ctx;
          ab[source_pos[0]] = 0; ab[source_pos[1]] = 0;
          AB[source_pos[0]] = 1; AB[source_pos[1]] = 1;
          Ab[source_pos[0]] = 1; Ab[source_pos[1]] = 0;
          aB[source_pos[0]] = 0; aB[source_pos[1]] = 1;
          MultilinearConstraint c;
          c.group = ConstraintGroup::relation;
          c.cmp = sign_cmp(rel.sign);
          c.rhs = 0.0;
          c.terms.push_back({1.0, {family_var(net, cs, node, 0, net.parent_config_index(node, ab))}});
          c.terms.push_back({1.0, {family_var(net, cs, node, 0, net.parent_config_index(node, AB))}});
          c.terms.push_back({-1.0, {family_var(net, cs, node, 0, net.parent_config_index(node, Ab))}});
          c.terms.push_back({-1.0, {family_var(net, cs, node, 0, net.parent_config_index(node, aB))}});
          c.tag = base;
          cs.add_constraint(std::move(c));
        });
        break;
      case RelationKind::product_synergy:
        for_each_context(net, node, source_pos, [&](const std::vector<int>& ctx) {
          std::vector<int> ab = ctx, AB = ctx, Ab = ctx, aB = ctx;
          ab[source_pos[0]] = 0; ab[source_pos[1]] = 0;
          AB[source_pos[0]] = 1; AB[source_pos[1]] = 1;
          Ab[source_pos[0]] = 1; Ab[source_pos[1]] = 0;
          aB[source_pos[0]] = 0; aB[source_pos[1]] = 1;
          int j = rel.target_value;
          MultilinearConstraint c;
          c.group = ConstraintGroup::relation;
          c.cmp = sign_cmp(rel.sign);
          c.rhs = 0.0;
          c.terms.push_back({1.0,
                             {family_var(net, cs, node, j, net.parent_config_index(node, ab)),
                              family_var(net, cs, node, j, net.parent_config_index(node, AB))}});
          c.terms.push_back({-1.0,
                             {family_var(net, cs, node, j, net.parent_config_index(node, aB)),
                              family_var(net, cs, node, j, net.parent_config_index(node, Ab))}});
          c.tag = base;
          cs.add_constraint(std::move(c));
        });
        break;
    }
  }
}

ConstraintSet build(const Network& net, const Options& opt) {
  ConstraintSet cs;
  declare_and_structure(net, cs, opt);
  if (opt.relations)
    for (const auto& spec : net.nodes) compile_node_relations(net, spec.variable, cs);
  return cs;
}

}  // namespace

ConstraintSet compile_parameter_space(const Network& net) { return build(net, {true, true}); }

ConstraintSet compile_relations(const Network& net) { return build(net, {true, false}); }

ConstraintSet compile_interval_assessments(const Network& net) { return build(net, {false, true}); }

std::string format_terms(const ConstraintSet& cs, const std::vector<Monomial>& terms) {
  std::ostringstream out;
  bool first = true;
  for (const auto& m : terms) {
    double c = m.coeff;
    if (first) {
      if (c < 0) out << "-";
    } else {
      out << (c < 0 ? " - " : " + ");
    }
    first = false;
    double a = std::abs(c);
    bool unit = std::abs(a - 1.0) <= 1e-15 && !m.vars.empty();
    if (!unit) out << fmt(a);
    for (size_t i = 0; i < m.vars.size(); ++i) {
      if (!unit || i > 0) out << "*";
      out << cs.vars[size_t(m.vars[i])].name();
    }
  }
  if (first) out << "0";
  return out.str();
}

std::string format_constraint(const ConstraintSet& cs, const MultilinearConstraint& c) {
  std::string op = c.cmp == Cmp::le ? " <= " : (c.cmp == Cmp::ge ? " >= " : " = ");
  return format_terms(cs, c.terms) + op + fmt(c.rhs);
}

}  // namespace sqpn
