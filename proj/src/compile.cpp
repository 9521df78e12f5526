#include "sqpn/compile.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>
#include <sstream>

#include "sqpn/errors.hpp"

namespace sqpn {

namespace {

// --- symbolic factors -------------------------------------------------------

struct Entry {
  double c = 1.0;
  int var = -1;  // -1: constant entry
};

struct Factor {
  std::vector<int> scope;  // ascending variable ids
  std::vector<int> cards;
  std::vector<Entry> cells;  // row-major, first scope variable most significant
  std::vector<int> families;  // network nodes whose family tables fed this factor
  bool evidence_member = false;  // some consumed family belongs to an observed node

  int index(const std::vector<int>& values) const {
    int idx = 0;
    for (size_t m = 0; m < scope.size(); ++m) idx = idx * cards[m] + values[m];
    return idx;
  }
};

struct VeContext {
  const Network& net;
  ConstraintSet& cs;
  std::vector<Definition>& defs;
  std::map<std::pair<int, int>, int>& aux_cse;
  int& bucket_counter;
  int& aux_counter;
  VeStats* stats = nullptr;
  RowMap* rows = nullptr;
};

Interval cs_terms_interval(const VeContext& ctx, const std::vector<Monomial>& terms) {
  std::vector<Interval> box;
  box.reserve(ctx.cs.vars.size());
  for (const auto& v : ctx.cs.vars) box.push_back(v.box);
  static const RowMap empty_rows;
  return terms_interval(terms, box, ctx.rows ? *ctx.rows : empty_rows);
}

Interval var_box(const ConstraintSet& cs, int var) { return cs.vars[size_t(var)].box; }

// Entry for theta (node, value, config): folds point boxes into constants.
Entry theta_entry(const ConstraintSet& cs, int node, int value, int config) {
  int id = cs.theta(node, value, config);
  assert(id >= 0);
  Interval b = var_box(cs, id);
  if (b.is_point(1e-14)) return Entry{b.lo, -1};
  return Entry{1.0, id};
}

Factor family_factor(const VeContext& ctx, int node, const Evidence& evidence) {
  const NodeSpec& spec = ctx.net.node(node);
  std::vector<int> full_scope = spec.parents;
  full_scope.push_back(node);
  std::sort(full_scope.begin(), full_scope.end());

  Factor f;
  f.families = {node};
  f.evidence_member = evidence.count(node) != 0;
  for (int v : full_scope) {
    if (evidence.count(v)) continue;
    f.scope.push_back(v);
    f.cards.push_back(ctx.net.var(v).cardinality());
  }
  size_t cells = 1;
  for (int c : f.cards) cells *= size_t(c);
  f.cells.resize(cells);

  std::vector<int> values(f.scope.size(), 0);
  for (size_t cell = 0; cell < cells; ++cell) {
    size_t rem = cell;
    for (size_t m = f.scope.size(); m-- > 0;) {
      values[m] = int(rem % size_t(f.cards[m]));
      rem /= size_t(f.cards[m]);
    }
    auto value_of = [&](int v) {
      auto ev = evidence.find(v);
      if (ev != evidence.end()) return ev->second;
      size_t pos = size_t(std::lower_bound(f.scope.begin(), f.scope.end(), v) - f.scope.begin());
      return values[pos];
    };
    std::vector<int> parent_values;
    parent_values.reserve(spec.parents.size());
    for (int p : spec.parents) parent_values.push_back(value_of(p));
    int k = ctx.net.parent_config_index(node, parent_values);
    f.cells[cell] = theta_entry(ctx.cs, node, value_of(node), k);
  }
  return f;
}

// Chains a product of variables down to degree <= 2 using shared bilinear
// auxiliaries (aux = u * v), memoized per unordered pair.
int aux_for_pair(VeContext& ctx, int u, int v) {
  auto key = std::minmax(u, v);
  auto it = ctx.aux_cse.find(key);
  if (it != ctx.aux_cse.end()) return it->second;
  Interval bu = var_box(ctx.cs, key.first), bv = var_box(ctx.cs, key.second);
  Interval box{bu.lo * bv.lo, std::min(1.0, bu.hi * bv.hi)};
  int aux = ctx.cs.add_var(VarRole::auxiliary, ctx.aux_counter++, -1, -1, box);
  MultilinearConstraint c;
  c.group = ConstraintGroup::definition;
  c.defined_var = aux;
  c.cmp = Cmp::eq;
  c.rhs = 0.0;
  c.terms.push_back({1.0, {aux}});
  c.terms.push_back({-1.0, {key.first, key.second}});
  c.tag = "aux product";
  ctx.cs.add_constraint(std::move(c));
  ctx.defs.push_back({aux, {Monomial{1.0, {key.first, key.second}}}});
  ctx.aux_cse.emplace(key, aux);
  if (ctx.stats) ctx.stats->constraints += 1;
  return aux;
}

Monomial decompose(VeContext& ctx, Monomial m) {
  while (m.degree() > 2) {
    int aux = aux_for_pair(ctx, m.vars[0], m.vars[1]);
    std::vector<int> rest;
    rest.push_back(aux);
    rest.insert(rest.end(), m.vars.begin() + 2, m.vars.end());
    m.vars = std::move(rest);
  }
  return m;
}

// Messages are partial probabilities; their true value never exceeds 1.
int make_message(VeContext& ctx, int bucket, int config, std::vector<Monomial> rhs) {
  Interval box = cs_terms_interval(ctx, rhs);
  box.lo = std::max(0.0, box.lo);
  box.hi = std::min(1.0, box.hi);
  if (box.hi < box.lo) box.hi = box.lo;
  int m = ctx.cs.add_var(VarRole::message, bucket, config, -1, box);
  MultilinearConstraint c;
  c.group = ConstraintGroup::definition;
  c.defined_var = m;
  c.cmp = Cmp::eq;
  c.rhs = 0.0;
  c.terms.push_back({1.0, {m}});
  for (const auto& mono : rhs) {
    if (mono.vars.empty())
      c.rhs += mono.coeff;
    else
      c.terms.push_back({-mono.coeff, mono.vars});
  }
  c.tag = "bucket " + std::to_string(bucket);
  ctx.cs.add_constraint(std::move(c));
  ctx.defs.push_back({m, std::move(rhs)});
  if (ctx.stats) ctx.stats->constraints += 1;
  return m;
}

// A bucket table provably sums to one when the consumed families telescope:
// every non-evidence variable in their scopes has its own family consumed and
// none of the consumed families belongs to an observed node. Observed members
// cap the mass at one instead. The unit fact feeds both the relaxation (extra
// row) and the row-aware interval arithmetic.
void register_table_mass(VeContext& ctx, const std::vector<int>& families, bool evidence_member,
                         const std::vector<int>& cells, const Evidence& evidence) {
  if (cells.size() < 2) return;
  for (const auto& group : ctx.cs.unit_mass_groups)
    if (group == cells) return;  // already known (root reuse)
  for (int i : families)
    for (int p : ctx.net.node(i).parents)
      if (!evidence.count(p) && !std::binary_search(families.begin(), families.end(), p))
        return;
  MultilinearConstraint mass;
  mass.group = ConstraintGroup::other;
  mass.cmp = evidence_member ? Cmp::le : Cmp::eq;
  mass.rhs = 1.0;
  for (int cell : cells) mass.terms.push_back({1.0, {cell}});
  mass.tag = "table mass";
  ctx.cs.add_constraint(std::move(mass));
  if (evidence_member) return;

  // tighten the cell boxes against the unit total and remember the group
  double sum_lo = 0.0, sum_hi = 0.0;
  for (int cell : cells) {
    sum_lo += ctx.cs.vars[size_t(cell)].box.lo;
    sum_hi += ctx.cs.vars[size_t(cell)].box.hi;
  }
  for (int cell : cells) {
    Interval& b = ctx.cs.vars[size_t(cell)].box;
    b.lo = std::max(b.lo, 1.0 - (sum_hi - b.hi));
    b.hi = std::min(b.hi, 1.0 - (sum_lo - b.lo));
    if (b.lo > b.hi) b.lo = b.hi = 0.5 * (b.lo + b.hi);
  }
  ctx.cs.unit_mass_groups.push_back(cells);
  if (ctx.rows) {
    int ordinal = int(ctx.rows->rows.size());
    ctx.rows->rows.push_back(cells);
    ctx.rows->row_of.resize(ctx.cs.vars.size(), -1);
    for (int cell : cells) ctx.rows->row_of[size_t(cell)] = ordinal;
  }
}

// Variables that can reach keep or evidence; families outside are barren.
std::set<int> relevant_set(const Network& net, const std::vector<int>& keep,
                           const Evidence& evidence) {
  std::set<int> relevant(keep.begin(), keep.end());
  for (const auto& [v, val] : evidence) {
    (void)val;
    relevant.insert(v);
  }
  std::vector<int> order = topological_order(net);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!relevant.count(*it)) continue;
    for (int p : net.node(*it).parents) relevant.insert(p);
  }
  return relevant;
}

std::vector<int> min_fill_order(const Network& net, const std::vector<int>& keep,
                                const Evidence& evidence) {
  std::set<int> relevant = relevant_set(net, keep, evidence);
  std::set<int> keep_set(keep.begin(), keep.end());
  std::set<int> vertices;
  for (int v : relevant)
    if (!evidence.count(v)) vertices.insert(v);

  std::map<int, std::set<int>> adj;
  for (int v : vertices) adj[v];
  for (int v : relevant) {
    std::vector<int> scope;
    if (!evidence.count(v)) scope.push_back(v);
    for (int p : net.node(v).parents)
      if (!evidence.count(p)) scope.push_back(p);
    for (size_t a = 0; a < scope.size(); ++a)
      for (size_t b = a + 1; b < scope.size(); ++b) {
        adj[scope[a]].insert(scope[b]);
        adj[scope[b]].insert(scope[a]);
      }
  }

  std::set<int> eliminable;
  for (int v : vertices)
    if (!keep_set.count(v)) eliminable.insert(v);

  std::vector<int> order;
  while (!eliminable.empty()) {
    int best = -1;
    long best_fill = -1;
    for (int v : eliminable) {
      const auto& nbrs = adj[v];
      long fill = 0;
      for (auto a = nbrs.begin(); a != nbrs.end(); ++a) {
        auto b = a;
        for (++b; b != nbrs.end(); ++b)
          if (!adj[*a].count(*b)) ++fill;
      }
      if (best == -1 || fill < best_fill) {
        best = v;
        best_fill = fill;
      }
    }
    order.push_back(best);
    auto nbrs = adj[best];
    for (int a : nbrs)
      for (int b : nbrs)
        if (a != b) adj[a].insert(b);
    for (int a : nbrs) adj[a].erase(best);
    adj.erase(best);
    eliminable.erase(best);
  }
  return order;
}

VeTable ve_run(VeContext& ctx, const std::vector<int>& keep, const Evidence& evidence) {
  std::set<int> relevant = relevant_set(ctx.net, keep, evidence);
  std::vector<Factor> factors;
  for (int v : relevant) {
    // conditioning on an observed root is exact factor removal: the tables
    // computed here become conditionals given the observed roots
    if (evidence.count(v) && ctx.net.node(v).parents.empty()) continue;
    factors.push_back(family_factor(ctx, v, evidence));
  }

  std::vector<int> order = min_fill_order(ctx.net, keep, evidence);
  std::vector<bool> active(factors.size(), true);

  for (int elim : order) {
    std::vector<size_t> bucket;
    std::vector<int> union_scope;
    std::set<int> union_families;
    bool evidence_member = false;
    for (size_t f = 0; f < factors.size(); ++f) {
      if (!active[f]) continue;
      if (std::find(factors[f].scope.begin(), factors[f].scope.end(), elim) ==
          factors[f].scope.end())
        continue;
      bucket.push_back(f);
      union_families.insert(factors[f].families.begin(), factors[f].families.end());
      evidence_member = evidence_member || factors[f].evidence_member;
      for (int v : factors[f].scope)
        if (v != elim && std::find(union_scope.begin(), union_scope.end(), v) == union_scope.end())
          union_scope.push_back(v);
    }
    if (bucket.empty()) continue;
    std::sort(union_scope.begin(), union_scope.end());

    Factor out;
    out.families.assign(union_families.begin(), union_families.end());
    out.evidence_member = evidence_member;
    out.scope = union_scope;
    for (int v : union_scope) out.cards.push_back(ctx.net.var(v).cardinality());
    size_t cells = 1;
    for (int c : out.cards) cells *= size_t(c);
    out.cells.resize(cells);

    int bucket_id = ctx.bucket_counter++;
    if (ctx.stats) ctx.stats->bucket_configs.push_back(long(cells));

    std::vector<int> values(out.scope.size(), 0);
    int elim_card = ctx.net.var(elim).cardinality();
    for (size_t cell = 0; cell < cells; ++cell) {
      size_t rem = cell;
      for (size_t m = out.scope.size(); m-- > 0;) {
        values[m] = int(rem % size_t(out.cards[m]));
        rem /= size_t(out.cards[m]);
      }
      std::vector<Monomial> rhs;
      for (int ev = 0; ev < elim_card; ++ev) {
        Monomial mono{1.0, {}};
        bool zero = false;
        for (size_t f : bucket) {
          std::vector<int> fv(factors[f].scope.size(), 0);
          for (size_t m = 0; m < factors[f].scope.size(); ++m) {
            int v = factors[f].scope[m];
            if (v == elim) {
              fv[m] = ev;
            } else {
              size_t pos = size_t(std::lower_bound(out.scope.begin(), out.scope.end(), v) -
                                  out.scope.begin());
              fv[m] = values[pos];
            }
          }
          const Entry& e = factors[f].cells[size_t(factors[f].index(fv))];
          mono.coeff *= e.c;
          if (e.var >= 0) mono.vars.push_back(e.var);
          if (mono.coeff == 0.0) {
            zero = true;
            break;
          }
        }
        if (zero) continue;
        std::sort(mono.vars.begin(), mono.vars.end());
        rhs.push_back(decompose(ctx, std::move(mono)));
      }
      out.cells[cell] = Entry{1.0, make_message(ctx, bucket_id, int(cell), std::move(rhs))};
    }
    {
      std::vector<int> message_ids;
      for (const Entry& e : out.cells) message_ids.push_back(e.var);
      register_table_mass(ctx, out.families, out.evidence_member, message_ids, evidence);
    }
    for (size_t f : bucket) active[f] = false;
    factors.push_back(std::move(out));
    active.push_back(true);
  }

  // root bucket: multiply the remaining factors for every keep configuration
  VeTable table;
  table.keep = keep;
  std::sort(table.keep.begin(), table.keep.end());
  std::vector<int> cards;
  size_t cells = 1;
  for (int v : table.keep) {
    cards.push_back(ctx.net.var(v).cardinality());
    cells *= size_t(ctx.net.var(v).cardinality());
  }
  int bucket_id = ctx.bucket_counter++;
  if (ctx.stats) ctx.stats->bucket_configs.push_back(long(cells));

  std::vector<int> values(table.keep.size(), 0);
  for (size_t cell = 0; cell < cells; ++cell) {
    size_t rem = cell;
    for (size_t m = table.keep.size(); m-- > 0;) {
      values[m] = int(rem % size_t(cards[m]));
      rem /= size_t(cards[m]);
    }
    Monomial mono{1.0, {}};
    bool zero = false;
    for (size_t f = 0; f < factors.size(); ++f) {
      if (!active[f]) continue;
      std::vector<int> fv(factors[f].scope.size(), 0);
      for (size_t m = 0; m < factors[f].scope.size(); ++m) {
        size_t pos = size_t(std::lower_bound(table.keep.begin(), table.keep.end(),
                                             factors[f].scope[m]) -
                            table.keep.begin());
        fv[m] = values[pos];
      }
      const Entry& e = factors[f].cells[size_t(factors[f].index(fv))];
      mono.coeff *= e.c;
      if (e.var >= 0) mono.vars.push_back(e.var);
      if (mono.coeff == 0.0) {
        zero = true;
        break;
      }
    }
    std::vector<Monomial> rhs;
    if (!zero) {
      std::sort(mono.vars.begin(), mono.vars.end());
      rhs.push_back(decompose(ctx, std::move(mono)));
    }
    // a bare variable needs no copy; otherwise one root message per config
    if (rhs.size() == 1 && rhs[0].vars.size() == 1 && rhs[0].coeff == 1.0) {
      table.cells.push_back(rhs[0].vars[0]);
    } else {
      table.cells.push_back(make_message(ctx, bucket_id, int(cell), std::move(rhs)));
    }
  }

  {
    std::set<int> union_families;
    bool evidence_member = false;
    for (size_t f = 0; f < factors.size(); ++f) {
      if (!active[f]) continue;
      union_families.insert(factors[f].families.begin(), factors[f].families.end());
      evidence_member = evidence_member || factors[f].evidence_member;
    }
    std::vector<int> families(union_families.begin(), union_families.end());
    register_table_mass(ctx, families, evidence_member, table.cells, evidence);
  }
  return table;
}

// --- program builder --------------------------------------------------------

struct Builder {
  const Network& net;
  MultilinearProgram p;
  std::map<std::pair<int, int>, int> cse;
  RowMap row_map;
  int bucket_counter = 0;
  int aux_counter = 0;

  explicit Builder(const Network& n) : net(n) {
    p.cs = compile_parameter_space(net);
    row_map = build_row_map(p.cs);
    // learned credal links become sweep definitions: theta = scale * t + offset
    for (const auto& c : p.cs.constraints) {
      if (c.defined_var < 0) continue;
      Definition def;
      def.var = c.defined_var;
      double self_coeff = 0.0;
      for (const auto& m : c.terms)
        if (m.vars.size() == 1 && m.vars[0] == c.defined_var) self_coeff = m.coeff;
      for (const auto& m : c.terms) {
        if (m.vars.size() == 1 && m.vars[0] == c.defined_var) continue;
        def.rhs.push_back({-m.coeff / self_coeff, m.vars});
      }
      def.rhs.push_back({c.rhs / self_coeff, {}});
      p.defs.push_back(std::move(def));
    }
    // free rows and primal variables
    for (const auto& spec : net.nodes) {
      int i = spec.variable;
      int card = net.var(i).cardinality();
      int configs = net.family_config_count(i);
      for (int k = 0; k < configs; ++k) {
        if (spec.has_numeric(k)) continue;
        FamilyRow row;
        row.node = i;
        row.config = k;
        row.role = spec.idm_rows.count(k) ? VarRole::hyper_t : VarRole::theta;
        for (int j = 0; j < card; ++j)
          row.vars.push_back(row.role == VarRole::hyper_t ? p.cs.hyper(i, j, k)
                                                          : p.cs.theta(i, j, k));
        for (int v : row.vars) p.primal.push_back(v);
        p.rows.push_back(std::move(row));
      }
    }
  }

  VeContext context(VeStats* stats = nullptr) {
    return VeContext{net, p.cs, p.defs, cse, bucket_counter, aux_counter, stats, &row_map};
  }

  // Sum of a list of message variables as one fresh message variable.
  int sum_var(const std::vector<int>& vars, const std::string& tag) {
    std::vector<Monomial> rhs;
    for (int v : vars) rhs.push_back({1.0, {v}});
    VeContext ctx = context();
    int id = make_message(ctx, bucket_counter++, 0, std::move(rhs));
    p.cs.constraints.back().tag = tag;
    return id;
  }

  // Ratio variable r with r * denominator = numerator.
  int ratio_var(int numerator, int denominator, Interval box) {
    int r = p.cs.add_var(VarRole::auxiliary, aux_counter++, -1, -1, box);
    MultilinearConstraint c;
    c.group = ConstraintGroup::other;
    c.cmp = Cmp::eq;
    c.rhs = 0.0;
    c.terms.push_back({1.0, {r, denominator}});
    c.terms.push_back({-1.0, {numerator}});
    c.tag = "conditional";
    p.cs.add_constraint(std::move(c));
    p.ratios.push_back({r, numerator, denominator});
    p.primal.push_back(r);
    return r;
  }

  // P(q|e) is a mixture of Q's table entries over evidence-consistent parent
  // configurations whenever no evidence variable is a descendant of Q (Markov
  // condition), which pins r even where P(e) can vanish.
  Interval conditional_hull(const Query& query) {
    std::set<int> descendants;
    std::vector<int> frontier{query.variable};
    while (!frontier.empty()) {
      int v = frontier.back();
      frontier.pop_back();
      for (const auto& spec : net.nodes) {
        if (descendants.count(spec.variable) || spec.variable == query.variable) continue;
        for (int par : spec.parents)
          if (par == v || descendants.count(par)) {
            descendants.insert(spec.variable);
            frontier.push_back(spec.variable);
            break;
          }
      }
    }
    for (const auto& [v, val] : query.evidence) {
      (void)val;
      if (descendants.count(v)) return Interval{0.0, 1.0};
    }
    const NodeSpec& spec = net.node(query.variable);
    Interval hull{1.0, 0.0};
    int configs = net.family_config_count(query.variable);
    for (int k = 0; k < configs; ++k) {
      std::vector<int> values = net.parent_config_values(query.variable, k);
      bool consistent = true;
      for (size_t m = 0; m < spec.parents.size(); ++m) {
        auto ev = query.evidence.find(spec.parents[m]);
        if (ev != query.evidence.end() && ev->second != values[m]) consistent = false;
      }
      if (!consistent) continue;
      const Interval& b = p.cs.vars[size_t(p.cs.theta(query.variable, query.value, k))].box;
      hull.lo = std::min(hull.lo, b.lo);
      hull.hi = std::max(hull.hi, b.hi);
    }
    if (hull.empty()) return Interval{0.0, 1.0};
    return hull;
  }

  void add_logic(const BooleanFormula& formula, const Evidence& condition, double alpha) {
    // scratch sizes for rollback when the assessment is vacuous
    size_t nvars = p.cs.vars.size(), ncons = p.cs.constraints.size(), ndefs = p.defs.size();
    auto cse_copy = cse;
    int bucket_copy = bucket_counter, aux_copy = aux_counter;

    std::set<int> keep_set;
    for (const std::string& name : formula_variables(formula)) {
      int id = net.variable_index(name);
      if (id < 0) throw ValidationError("logic assessment names unknown variable " + name);
      if (net.var(id).cardinality() != 2)
        throw ValidationError("logic assessments require binary variables (" + name + ")");
      keep_set.insert(id);
    }
    for (const auto& [v, val] : condition) {
      (void)val;
      keep_set.insert(v);
    }
    std::vector<int> keep(keep_set.begin(), keep_set.end());

    VeContext ctx = context();
    VeTable table = ve_run(ctx, keep, {});

    std::vector<int> cards;
    for (int v : table.keep) cards.push_back(net.var(v).cardinality());
    MultilinearConstraint c;
    c.group = ConstraintGroup::logic;
    c.cmp = Cmp::eq;
    c.rhs = 0.0;
    c.tag = "logic assessment";
    Interval cond_box{0.0, 0.0};
    std::vector<int> values(table.keep.size(), 0);
    for (size_t cell = 0; cell < table.cells.size(); ++cell) {
      size_t rem = cell;
      for (size_t m = table.keep.size(); m-- > 0;) {
        values[m] = int(rem % size_t(cards[m]));
        rem /= size_t(cards[m]);
      }
      bool consistent = true;
      for (const auto& [v, val] : condition) {
        size_t pos = size_t(std::lower_bound(table.keep.begin(), table.keep.end(), v) -
                            table.keep.begin());
        if (values[pos] != val) consistent = false;
      }
      if (!consistent) continue;
      Interval mbox = p.cs.vars[size_t(table.cells[cell])].box;
      cond_box.lo += mbox.lo;
      cond_box.hi += mbox.hi;
      std::map<std::string, bool> assignment;
      for (size_t m = 0; m < table.keep.size(); ++m)
        assignment[net.var(table.keep[m]).name] = values[m] == 0;  // value 0 is "higher"/true
      bool sat = formula.evaluate(assignment);
      double coeff = (sat ? 1.0 : 0.0) - alpha;
      if (coeff != 0.0) c.terms.push_back({coeff, {table.cells[cell]}});
    }
    if (cond_box.hi <= 1e-15)
      throw EvidenceImpossibleError("logic assessment conditions on an impossible event");

    size_t before = p.cs.constraints.size();
    p.cs.add_constraint(std::move(c));
    if (p.cs.constraints.size() == before) {
      // tautological: roll the scratch work back so programs stay identical
      p.cs.vars.resize(nvars);
      p.cs.constraints.resize(ncons);
      p.defs.resize(ndefs);
      cse = std::move(cse_copy);
      bucket_counter = bucket_copy;
      aux_counter = aux_copy;
    }
  }

  void add_network_assessments() {
    for (const auto& a : net.logic_assessments) {
      BooleanFormula f = parse_formula(a.formula);
      Evidence condition;
      for (const auto& [vname, valname] : a.condition) {
        int id = net.variable_index(vname);
        if (id < 0) throw ValidationError("logic condition names unknown variable " + vname);
        const auto& names = net.var(id).value_names;
        auto it = std::find(names.begin(), names.end(), valname);
        if (it == names.end())
          throw ValidationError("logic condition names unknown value " + valname);
        condition[id] = int(it - names.begin());
      }
      add_logic(f, condition, a.alpha);
    }
  }
};

void require_valid(const Network& net) {
  ValidationReport report = validate_network(net);
  if (!report.ok()) throw ValidationError("invalid network:\n" + report.str());
}

// Reformulation-linearization rows: every linear row (normalization, unit
// mass, linear relations and definitions) times a nonnegative variable that
// already shares a product with one of its variables. The products stay
// degree-2, so the relaxation picks them up as ordinary envelope columns, and
// the extra rows tie those columns together across elimination levels.
void add_rlt_rows(MultilinearProgram& p) {
  std::map<int, std::set<int>> partners;
  auto scan = [&](const std::vector<Monomial>& terms) {
    for (const auto& m : terms) {
      if (m.vars.size() != 2) continue;
      partners[m.vars[0]].insert(m.vars[1]);
      partners[m.vars[1]].insert(m.vars[0]);
    }
  };
  for (const auto& c : p.cs.constraints) scan(c.terms);
  scan(p.objective);

  size_t original = p.cs.constraints.size();
  std::vector<MultilinearConstraint> added;
  for (size_t ci = 0; ci < original; ++ci) {
    const auto& c = p.cs.constraints[ci];
    if (c.terms.size() > 8) continue;
    bool linear = true;
    for (const auto& m : c.terms)
      if (m.vars.size() != 1) linear = false;
    if (!linear) continue;
    std::set<int> involved;
    for (const auto& m : c.terms) involved.insert(m.vars[0]);
    std::set<int> candidates;
    for (int x : involved) {
      auto it = partners.find(x);
      if (it == partners.end()) continue;
      for (int v : it->second)
        if (!involved.count(v)) candidates.insert(v);
    }
    for (int v : candidates) {
      MultilinearConstraint r;
      r.group = ConstraintGroup::other;
      r.cmp = c.cmp;
      r.rhs = 0.0;
      r.tag = "rlt";
      for (const auto& m : c.terms) r.terms.push_back({m.coeff, {m.vars[0], v}});
      if (c.rhs != 0.0) r.terms.push_back({-c.rhs, {v}});
      added.push_back(std::move(r));
    }
  }
  for (auto& r : added) p.cs.add_constraint(std::move(r));
}

}  // namespace

int VeTable::cell(const Network& net, const std::vector<int>& values) const {
  int idx = 0;
  for (size_t m = 0; m < keep.size(); ++m) idx = idx * net.var(keep[m]).cardinality() + values[m];
  return cells[size_t(idx)];
}

std::vector<int> elimination_order(const Network& net, const std::vector<int>& keep,
                                   const Evidence& evidence) {
  return min_fill_order(net, keep, evidence);
}

VeTable symbolic_ve(const Network& net, const std::vector<int>& keep, const Evidence& evidence,
                    ConstraintSet& cs, std::vector<Definition>& defs, VeStats* stats) {
  std::map<std::pair<int, int>, int> cse;
  int bucket_counter = 0, aux_counter = 0;
  // continue numbering after any variables already present
  for (const auto& v : cs.vars) {
    if (v.role == VarRole::message) bucket_counter = std::max(bucket_counter, v.node + 1);
    if (v.role == VarRole::auxiliary) aux_counter = std::max(aux_counter, v.node + 1);
  }
  RowMap rows = build_row_map(cs);
  VeContext ctx{net, cs, defs, cse, bucket_counter, aux_counter, stats, &rows};
  return ve_run(ctx, keep, evidence);
}

namespace {

// Conditional table P(Q | e) as one variable per query-value: root evidence is
// conditioned exactly by factor removal; remaining (deep) evidence goes
// through the multiplied-through ratio variable.
int pose_conditional(Builder& b, const Query& query) {
  const Network& net = b.net;
  bool deep = false;
  for (const auto& [v, val] : query.evidence) {
    if (!net.node(v).parents.empty()) {
      deep = true;
    } else {
      int theta = b.p.cs.theta(v, val, 0);
      if (b.p.cs.vars[size_t(theta)].box.hi <= 1e-15)
        throw EvidenceImpossibleError("evidence value " + net.var(v).name +
                                      " has zero probability");
    }
  }
  VeContext ctx = b.context();
  VeTable joint = ve_run(ctx, {query.variable}, query.evidence);
  if (!deep) return joint.cells[size_t(query.value)];
  int m_evidence = b.sum_var(joint.cells, "P(evidence)");
  if (b.p.cs.vars[size_t(m_evidence)].box.hi <= 1e-15)
    throw EvidenceImpossibleError("evidence has zero probability under every parameterization");
  return b.ratio_var(joint.cells[size_t(query.value)], m_evidence, b.conditional_hull(query));
}

}  // namespace

MultilinearProgram pose_influence_query(const Network& net, const Query& query) {
  require_valid(net);
  if (query.evidence.empty()) throw Error("influence query requires evidence");
  if (query.evidence.count(query.variable))
    throw Error("evidence must not mention the query variable");

  Builder b(net);
  b.add_network_assessments();
  int conditional = pose_conditional(b, query);

  VeContext ctx2 = b.context();
  VeTable marginal = ve_run(ctx2, {query.variable}, {});

  b.p.objective.push_back({1.0, {conditional}});
  b.p.objective.push_back({-1.0, {marginal.cells[size_t(query.value)]}});
  b.p.objective_desc = "P(q|e) - P(q)";
  add_rlt_rows(b.p);
  return std::move(b.p);
}

MultilinearProgram pose_marginal_query(const Network& net, int variable, int value,
                                       const Evidence& evidence) {
  require_valid(net);
  if (evidence.count(variable)) throw Error("evidence must not mention the query variable");

  Builder b(net);
  b.add_network_assessments();
  if (evidence.empty()) {
    VeContext ctx = b.context();
    VeTable table = ve_run(ctx, {variable}, evidence);
    b.p.objective.push_back({1.0, {table.cells[size_t(value)]}});
    b.p.objective_desc = "P(q)";
  } else {
    Query query{variable, value, evidence};
    int conditional = pose_conditional(b, query);
    b.p.objective.push_back({1.0, {conditional}});
    b.p.objective_desc = "P(q|e)";
  }
  add_rlt_rows(b.p);
  return std::move(b.p);
}

ConstraintSet compile_logic_assessment(const Network& net, const BooleanFormula& formula,
                                       const Evidence& condition, double alpha) {
  require_valid(net);
  Builder b(net);
  b.add_logic(formula, condition, alpha);
  return std::move(b.p.cs);
}

Sign classify_sign(double min_value, double max_value, double eps) {
  if (std::abs(min_value) <= eps && std::abs(max_value) <= eps) return Sign::zero;
  if (max_value <= eps && min_value < -eps) return Sign::negative;
  if (min_value >= -eps && max_value > eps) return Sign::positive;
  return Sign::ambiguous;
}

std::string dump_program(const MultilinearProgram& p) {
  std::ostringstream out;
  out << "objective: " << format_terms(p.cs, p.objective) << "\n";
  out << "subject to\n";
  for (const auto& c : p.cs.constraints) out << "  " << format_constraint(p.cs, c) << "\n";
  out << "bounds\n";
  for (const auto& v : p.cs.vars) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "[%.12g, %.12g]", v.box.lo, v.box.hi);
    out << "  " << v.name() << " in " << buf << "\n";
  }
  return out.str();
}

RowMap build_row_map(const ConstraintSet& cs) {
  RowMap map;
  map.row_of.assign(cs.vars.size(), -1);
  std::map<std::tuple<int, int, int>, int> index;  // (role, node, config) -> ordinal
  for (const auto& v : cs.vars) {
    if (v.role != VarRole::theta && v.role != VarRole::hyper_t) continue;
    auto key = std::make_tuple(int(v.role), v.node, v.config);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, int(map.rows.size())).first;
      map.rows.emplace_back();
    }
    map.row_of[size_t(v.id)] = it->second;
    map.rows[size_t(it->second)].push_back(v.id);
  }
  for (const auto& group : cs.unit_mass_groups) {
    int ordinal = int(map.rows.size());
    map.rows.push_back(group);
    for (int v : group) map.row_of[size_t(v)] = ordinal;
  }
  return map;
}

namespace {

Interval plain_product(const Monomial& m, const std::vector<Interval>& box) {
  Interval prod{m.coeff, m.coeff};
  for (int v : m.vars) {
    const Interval& b = box[size_t(v)];
    double c1 = prod.lo * b.lo, c2 = prod.lo * b.hi, c3 = prod.hi * b.lo, c4 = prod.hi * b.hi;
    prod = Interval{std::min(std::min(c1, c2), std::min(c3, c4)),
                    std::max(std::max(c1, c2), std::max(c3, c4))};
  }
  return prod;
}

// extreme values of sum(c_j x_j) subject to sum(x) = 1 and the boxes
Interval row_weighted_hull(const std::vector<int>& row_vars, const std::map<int, double>& coeff,
                           const std::vector<Interval>& box) {
  double base = 0.0, lo_total = 0.0, hi_total = 0.0;
  std::vector<std::pair<double, int>> entries;
  for (int v : row_vars) {
    auto it = coeff.find(v);
    double c = it == coeff.end() ? 0.0 : it->second;
    base += c * box[size_t(v)].lo;
    lo_total += box[size_t(v)].lo;
    hi_total += box[size_t(v)].hi;
    entries.push_back({c, v});
  }
  double budget = 1.0 - lo_total;
  if (budget < -1e-12 || hi_total < 1.0 - 1e-12) {
    // row simplex empty inside the boxes; fall back to a plain hull
    Interval total{0.0, 0.0};
    for (const auto& [c, v] : entries) {
      total.lo += std::min(c * box[size_t(v)].lo, c * box[size_t(v)].hi);
      total.hi += std::max(c * box[size_t(v)].lo, c * box[size_t(v)].hi);
    }
    return total;
  }
  auto fill = [&](bool maximize) {
    std::vector<std::pair<double, int>> order = entries;
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return maximize ? a.first > b.first : a.first < b.first;
      return a.second < b.second;
    });
    double remaining = budget;
    double value = base;
    for (const auto& [c, v] : order) {
      double take = std::min(remaining, box[size_t(v)].width());
      value += c * take;
      remaining -= take;
      if (remaining <= 0) break;
    }
    return value;
  };
  return Interval{fill(false), fill(true)};
}

}  // namespace

Interval terms_interval(const std::vector<Monomial>& terms, const std::vector<Interval>& box,
                        const RowMap& rows) {
  Interval total{0.0, 0.0};
  // key: (row ordinal, partner variables) -> per-row-variable coefficients
  std::map<std::pair<int, std::vector<int>>, std::map<int, double>> groups;
  for (const auto& m : terms) {
    int grouped = -1;
    if (!rows.row_of.empty()) {
      for (int v : m.vars) {
        if (size_t(v) < rows.row_of.size() && rows.row_of[size_t(v)] >= 0) {
          grouped = v;
          break;
        }
      }
    }
    if (grouped < 0) {
      Interval prod = plain_product(m, box);
      total.lo += prod.lo;
      total.hi += prod.hi;
      continue;
    }
    std::vector<int> partners;
    for (int v : m.vars)
      if (v != grouped) partners.push_back(v);
    groups[{rows.row_of[size_t(grouped)], partners}][grouped] += m.coeff;
  }
  for (const auto& [key, coeff] : groups) {
    Interval hull = row_weighted_hull(rows.rows[size_t(key.first)], coeff, box);
    Interval partner{1.0, 1.0};
    for (int v : key.second) {
      const Interval& b = box[size_t(v)];
      double c1 = partner.lo * b.lo, c2 = partner.lo * b.hi, c3 = partner.hi * b.lo,
             c4 = partner.hi * b.hi;
      partner = Interval{std::min(std::min(c1, c2), std::min(c3, c4)),
                         std::max(std::max(c1, c2), std::max(c3, c4))};
    }
    double c1 = partner.lo * hull.lo, c2 = partner.lo * hull.hi, c3 = partner.hi * hull.lo,
           c4 = partner.hi * hull.hi;
    total.lo += std::min(std::min(c1, c2), std::min(c3, c4));
    total.hi += std::max(std::max(c1, c2), std::max(c3, c4));
  }
  return total;
}

std::vector<Interval> initial_box(const MultilinearProgram& p) {
  std::vector<Interval> box;
  box.reserve(p.cs.vars.size());
  for (const auto& v : p.cs.vars) box.push_back(v.box);
  return box;
}

double evaluate_terms(const std::vector<Monomial>& terms, const Eigen::VectorXd& x) {
  double total = 0.0;
  for (const auto& m : terms) {
    double v = m.coeff;
    for (int id : m.vars) v *= x[id];
    total += v;
  }
  return total;
}

void sweep_definitions(const MultilinearProgram& p, Eigen::VectorXd& x) {
  for (const auto& def : p.defs) x[def.var] = evaluate_terms(def.rhs, x);
  for (const auto& ratio : p.ratios) {
    double den = x[ratio.denominator];
    if (std::abs(den) > 1e-12) {
      const Interval& box = p.cs.vars[size_t(ratio.var)].box;
      x[ratio.var] = std::clamp(x[ratio.numerator] / den, box.lo, box.hi);
    }
  }
}

double evaluate_objective(const MultilinearProgram& p, const Eigen::VectorXd& x) {
  return evaluate_terms(p.objective, x);
}

double max_violation(const MultilinearProgram& p, const Eigen::VectorXd& x) {
  double worst = 0.0;
  for (const auto& v : p.cs.vars) {
    worst = std::max(worst, v.box.lo - x[v.id]);
    worst = std::max(worst, x[v.id] - v.box.hi);
  }
  for (const auto& c : p.cs.constraints) {
    double lhs = evaluate_terms(c.terms, x);
    switch (c.cmp) {
      case Cmp::le: worst = std::max(worst, lhs - c.rhs); break;
      case Cmp::ge: worst = std::max(worst, c.rhs - lhs); break;
      case Cmp::eq: worst = std::max(worst, std::abs(lhs - c.rhs)); break;
    }
  }
  return worst;
}

}  // namespace sqpn
