#include "sqpn/oracle.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "sqpn/errors.hpp"

namespace sqpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using RowTables = std::vector<std::map<int, Eigen::VectorXd>>;

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

// One pass over the full joint; everything the query needs falls out of it.
struct JointSums {
  double p_e = 0.0;
  double p_qe = 0.0;
  double p_q = 0.0;
};

JointSums joint_sums(const Network& net, const RowTables& rows, const Query& query) {
  int n = net.size();
  std::vector<int> values(size_t(n), 0);
  std::vector<int> cards(static_cast<size_t>(n));
  long total = 1;
  for (int i = 0; i < n; ++i) {
    cards[size_t(i)] = net.var(i).cardinality();
    total *= cards[size_t(i)];
  }
  if (total > (1L << 22)) throw Error("joint enumeration limit exceeded");

  JointSums sums;
  std::vector<int> parent_values;
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = n - 1; i >= 0; --i) {
      values[size_t(i)] = int(rem % cards[size_t(i)]);
      rem /= cards[size_t(i)];
    }
    double prob = 1.0;
    for (int i = 0; i < n && prob != 0.0; ++i) {
      const auto& parents = net.node(i).parents;
      parent_values.clear();
      for (int p : parents) parent_values.push_back(values[size_t(p)]);
      int k = net.parent_config_index(i, parent_values);
      prob *= rows[size_t(i)].at(k)[values[size_t(i)]];
    }
    if (prob == 0.0) continue;
    bool match_e = true;
    for (const auto& [v, val] : query.evidence)
      if (values[size_t(v)] != val) match_e = false;
    bool match_q = values[size_t(query.variable)] == query.value;
    if (match_e) sums.p_e += prob;
    if (match_e && match_q) sums.p_qe += prob;
    if (match_q) sums.p_q += prob;
  }
  return sums;
}

double query_value(const Network& net, const RowTables& rows, const Query& query, QueryKind kind) {
  JointSums sums = joint_sums(net, rows, query);
  switch (kind) {
    case QueryKind::marginal:
      return sums.p_q;
    case QueryKind::conditional:
      if (sums.p_e <= 0.0) throw Error("evidence has probability zero");
      return sums.p_qe / sums.p_e;
    case QueryKind::influence:
      if (sums.p_e <= 0.0) throw Error("evidence has probability zero");
      return sums.p_qe / sums.p_e - sums.p_q;
  }
  return 0.0;
}

RowTables numeric_tables(const Network& net) {
  RowTables rows(net.nodes.size());
  for (const auto& spec : net.nodes) {
    int configs = net.family_config_count(spec.variable);
    for (int k = 0; k < configs; ++k) {
      if (!spec.has_numeric(k)) throw Error("network is not fully numeric");
      rows[size_t(spec.variable)][k] = spec.numeric_rows.at(k);
    }
  }
  return rows;
}

// --- direct evaluation of the defining inequalities -------------------------

// Enumerates instantiations of pa(owner) \ sources; reports each full parent
// configuration tuple through the callback.
void each_context(const Network& net, int owner, const std::vector<int>& sources,
                  const std::function<void(std::vector<int>&)>& fn) {
  const auto& parents = net.node(owner).parents;
  std::vector<size_t> rest;
  for (size_t m = 0; m < parents.size(); ++m)
    if (std::find(sources.begin(), sources.end(), parents[m]) == sources.end()) rest.push_back(m);
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

double pair_violation(Sign sign, double diff, double delta, RelationKind kind) {
  switch (kind) {
    case RelationKind::weak:
      return sign == Sign::positive ? std::max(std::max(-diff, diff - delta), 0.0)
                                    : std::max(std::max(diff, -delta - diff), 0.0);
    case RelationKind::strong:
      return sign == Sign::positive ? std::max(delta - diff, 0.0) : std::max(diff + delta, 0.0);
    default:
      break;
  }
  switch (sign) {
    case Sign::positive: return std::max(-diff, 0.0);
    case Sign::negative: return std::max(diff, 0.0);
    case Sign::zero: return std::abs(diff);
    case Sign::ambiguous: return 0.0;
  }
  return 0.0;
}

// sign violation of one relation given the row values that constrain it
// (theta rows normally, t rows for learned credal nodes)
double relation_violation(const Network& net, int owner, const QualitativeRelation& rel,
                          const RowTables& rows) {
  if (rel.sign == Sign::ambiguous) return 0.0;
  const auto& parents = net.node(owner).parents;
  auto pos_of = [&](int v) {
    return size_t(std::find(parents.begin(), parents.end(), v) - parents.begin());
  };
  double worst = 0.0;
  auto value_at = [&](int j, std::vector<int>& ctx) {
    return rows[size_t(owner)].at(net.parent_config_index(owner, ctx))[j];
  };

  switch (rel.kind) {
    case RelationKind::influence:
    case RelationKind::weak:
    case RelationKind::strong: {
      size_t pa = pos_of(rel.sources[0]);
      each_context(net, owner, rel.sources, [&](std::vector<int>& ctx) {
        ctx[pa] = 0;
        double hi = value_at(0, ctx);
        ctx[pa] = 1;
        double lo = value_at(0, ctx);
        worst = std::max(worst, pair_violation(rel.sign, hi - lo, rel.delta, rel.kind));
      });
      break;
    }
    case RelationKind::situational: {
      size_t pa = pos_of(rel.sources[0]);
      std::vector<int> ctx(parents.size(), 0);
      for (size_t m = 0; m < parents.size(); ++m) {
        auto it = rel.context.find(parents[m]);
        if (it != rel.context.end()) ctx[m] = it->second;
      }
      ctx[pa] = 0;
      double hi = value_at(0, ctx);
      ctx[pa] = 1;
      double lo = value_at(0, ctx);
      worst = pair_violation(rel.sign, hi - lo, 0.0, RelationKind::influence);
      break;
    }
    case RelationKind::additive_synergy: {
      size_t pa = pos_of(rel.sources[0]), pb = pos_of(rel.sources[1]);
      each_context(net, owner, rel.sources, [&](std::vector<int>& ctx) {
        ctx[pa] = 0; ctx[pb] = 0;
        double v = value_at(0, ctx);
        ctx[pa] = 1; ctx[pb] = 1;
        v += value_at(0, ctx);
        ctx[pa] = 1; ctx[pb] = 0;
        v -= value_at(0, ctx);
        ctx[pa] = 0; ctx[pb] = 1;
        v -= value_at(0, ctx);
        worst = std::max(worst, pair_violation(rel.sign, v, 0.0, RelationKind::influence));
      });
      break;
    }
    case RelationKind::product_synergy: {
      size_t pa = pos_of(rel.sources[0]), pb = pos_of(rel.sources[1]);
      int j = rel.target_value;
      each_context(net, owner, rel.sources, [&](std::vector<int>& ctx) {
        ctx[pa] = 0; ctx[pb] = 0;
        double ab = value_at(j, ctx);
        ctx[pa] = 1; ctx[pb] = 1;
        double AB = value_at(j, ctx);
        ctx[pa] = 1; ctx[pb] = 0;
        double Ab = value_at(j, ctx);
        ctx[pa] = 0; ctx[pb] = 1;
        double aB = value_at(j, ctx);
        worst = std::max(worst, pair_violation(rel.sign, ab * AB - aB * Ab, 0.0,
                                               RelationKind::influence));
      });
      break;
    }
  }
  return worst;
}

// Rows carrying the relation semantics: t rows for learned credal nodes,
// theta rows otherwise.
RowTables constraint_rows(const Network& net, const FreeParams& params,
                          const Eigen::VectorXd& point) {
  RowTables rows(net.nodes.size());
  for (const auto& row : params.rows) {
    Eigen::VectorXd values(row.dim);
    for (int j = 0; j < row.dim; ++j) values[j] = point[row.offset + j];
    rows[size_t(row.node)][row.config] = values;
  }
  return rows;
}

}  // namespace

int FreeParams::free_count() const {
  int count = 0;
  for (size_t r = 0; r < rows.size(); ++r)
    if (rows[r].rep == int(r)) count += rows[r].dim - 1;
  return count;
}

FreeParams free_parameters(const Network& net) {
  FreeParams params;
  std::map<std::pair<int, int>, int> row_index;
  for (const auto& spec : net.nodes) {
    int i = spec.variable;
    int card = net.var(i).cardinality();
    int configs = net.family_config_count(i);
    for (int k = 0; k < configs; ++k) {
      if (spec.has_numeric(k)) continue;
      FreeParams::Row row;
      row.node = i;
      row.config = k;
      row.role = spec.idm_rows.count(k) ? VarRole::hyper_t : VarRole::theta;
      row.dim = card;
      row.offset = params.point_dim;
      row.rep = int(params.rows.size());
      for (int j = 0; j < card; ++j) {
        Interval box{0.0, 1.0};
        auto iv = spec.interval_rows.find({j, k});
        if (iv != spec.interval_rows.end()) box = intersect(box, iv->second);
        row.box.push_back(box);
      }
      row_index[{i, k}] = int(params.rows.size());
      params.point_dim += card;
      params.rows.push_back(std::move(row));
    }
  }

  // union-find over rows merged by zero-sign influences
  std::vector<int> parent(params.rows.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[size_t(a)] != a) a = parent[size_t(a)] = parent[size_t(parent[size_t(a)])];
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[size_t(std::max(a, b))] = std::min(a, b);
  };
  for (const auto& spec : net.nodes) {
    int i = spec.variable;
    const auto& ps = spec.parents;
    for (const auto& rel : spec.relations) {
      if (rel.sign != Sign::zero) continue;
      if (rel.kind != RelationKind::influence && rel.kind != RelationKind::situational) continue;
      size_t pa = size_t(std::find(ps.begin(), ps.end(), rel.sources[0]) - ps.begin());
      auto merge_at = [&](std::vector<int>& ctx) {
        ctx[pa] = 0;
        int k_hi = net.parent_config_index(i, ctx);
        ctx[pa] = 1;
        int k_lo = net.parent_config_index(i, ctx);
        auto a = row_index.find({i, k_hi});
        auto b = row_index.find({i, k_lo});
        if (a != row_index.end() && b != row_index.end()) unite(a->second, b->second);
      };
      if (rel.kind == RelationKind::influence) {
        each_context(net, i, rel.sources, merge_at);
      } else {
        std::vector<int> ctx(ps.size(), 0);
        for (size_t m = 0; m < ps.size(); ++m) {
          auto it = rel.context.find(ps[m]);
          if (it != rel.context.end()) ctx[m] = it->second;
        }
        merge_at(ctx);
      }
    }
  }
  for (size_t r = 0; r < params.rows.size(); ++r) params.rows[r].rep = find(int(r));
  return params;
}

std::vector<std::map<int, Eigen::VectorXd>> materialize_rows(const Network& net,
                                                             const FreeParams& params,
                                                             const Eigen::VectorXd& point) {
  RowTables rows(net.nodes.size());
  for (const auto& spec : net.nodes) {
    for (const auto& [k, row] : spec.numeric_rows) rows[size_t(spec.variable)][k] = row;
  }
  for (const auto& row : params.rows) {
    Eigen::VectorXd values(row.dim);
    for (int j = 0; j < row.dim; ++j) values[j] = point[row.offset + j];
    auto idm = net.node(row.node).idm_rows.find(row.config);
    if (idm != net.node(row.node).idm_rows.end()) {
      Eigen::VectorXd theta(row.dim);
      for (int j = 0; j < row.dim; ++j) {
        double scale, offset;
        idm_affine(idm->second, j, &scale, &offset);
        theta[j] = scale * values[j] + offset;
      }
      rows[size_t(row.node)][row.config] = theta;
    } else {
      rows[size_t(row.node)][row.config] = values;
    }
  }
  return rows;
}

Network materialize_network(const Network& net, const FreeParams& params,
                            const Eigen::VectorXd& point) {
  Network out = net;
  RowTables rows = materialize_rows(net, params, point);
  for (auto& spec : out.nodes) {
    spec.numeric_rows.clear();
    spec.interval_rows.clear();
    spec.relations.clear();
    spec.idm_rows.clear();
    spec.qualitative = false;
    for (const auto& [k, row] : rows[size_t(spec.variable)]) spec.numeric_rows[k] = row;
  }
  return out;
}

double direct_violation(const Network& net, const FreeParams& params,
                        const Eigen::VectorXd& point) {
  double worst = 0.0;
  // box and normalization of the free rows themselves
  for (const auto& row : params.rows) {
    double sum = 0.0;
    for (int j = 0; j < row.dim; ++j) {
      double v = point[row.offset + j];
      worst = std::max(worst, row.box[size_t(j)].lo - v);
      worst = std::max(worst, v - row.box[size_t(j)].hi);
      sum += v;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  RowTables crows = constraint_rows(net, params, point);
  // numeric rows participate in relation contexts of mixed nodes
  for (const auto& spec : net.nodes)
    for (const auto& [k, row] : spec.numeric_rows)
      crows[size_t(spec.variable)].emplace(k, row);
  for (const auto& spec : net.nodes)
    for (const auto& rel : spec.relations)
      worst = std::max(worst, relation_violation(net, spec.variable, rel, crows));

  if (!net.logic_assessments.empty()) {
    RowTables full = materialize_rows(net, params, point);
    for (const auto& a : net.logic_assessments) {
      BooleanFormula f = parse_formula(a.formula);
      // P(formula & condition) - alpha * P(condition) over the joint
      int n = net.size();
      std::vector<int> cards(static_cast<size_t>(n));
      long total = 1;
      for (int i = 0; i < n; ++i) {
        cards[size_t(i)] = net.var(i).cardinality();
        total *= cards[size_t(i)];
      }
      double p_cond = 0.0, p_sat = 0.0;
      std::vector<int> values(size_t(n), 0);
      std::vector<int> parent_values;
      for (long idx = 0; idx < total; ++idx) {
        long rem = idx;
        for (int i = n - 1; i >= 0; --i) {
          values[size_t(i)] = int(rem % cards[size_t(i)]);
          rem /= cards[size_t(i)];
        }
        bool cond = true;
        for (const auto& [vname, valname] : a.condition) {
          int v = net.variable_index(vname);
          const auto& names = net.var(v).value_names;
          int val = int(std::find(names.begin(), names.end(), valname) - names.begin());
          if (values[size_t(v)] != val) cond = false;
        }
        if (!cond) continue;
        double prob = 1.0;
        for (int i = 0; i < n && prob != 0.0; ++i) {
          parent_values.clear();
          for (int p : net.node(i).parents) parent_values.push_back(values[size_t(p)]);
          prob *= full[size_t(i)].at(net.parent_config_index(i, parent_values))[values[size_t(i)]];
        }
        if (prob == 0.0) continue;
        p_cond += prob;
        std::map<std::string, bool> assignment;
        for (int i = 0; i < n; ++i) assignment[net.var(i).name] = values[size_t(i)] == 0;
        if (f.evaluate(assignment)) p_sat += prob;
      }
      worst = std::max(worst, std::abs(p_sat - a.alpha * p_cond));
    }
  }
  return worst;
}

double numeric_ve(const Network& net, const Query& query) {
  RowTables rows = numeric_tables(net);
  return query_value(net, rows, query,
                     query.evidence.empty() ? QueryKind::marginal : QueryKind::conditional);
}

double numeric_influence(const Network& net, const Query& query) {
  RowTables rows = numeric_tables(net);
  return query_value(net, rows, query, QueryKind::influence);
}

namespace {

void copy_to_followers(const FreeParams& params, Eigen::VectorXd& point) {
  for (size_t r = 0; r < params.rows.size(); ++r) {
    const auto& row = params.rows[r];
    if (row.rep == int(r)) continue;
    const auto& rep = params.rows[size_t(row.rep)];
    for (int j = 0; j < row.dim; ++j) point[row.offset + j] = point[rep.offset + j];
  }
}

}  // namespace

std::vector<Eigen::VectorXd> sample_feasible(const Network& net, const FreeParams& params,
                                             int count, std::uint64_t seed, int max_tries,
                                             double tol) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> accepted;
  for (int attempt = 0; attempt < max_tries && int(accepted.size()) < count; ++attempt) {
    Eigen::VectorXd point(params.point_dim);
    bool ok = true;
    for (size_t r = 0; r < params.rows.size() && ok; ++r) {
      const auto& row = params.rows[r];
      if (row.rep != int(r)) continue;
      if (row.dim == 2) {
        Interval eff = intersect(row.box[0],
                                 Interval{1.0 - row.box[1].hi, 1.0 - row.box[1].lo});
        if (eff.empty()) {
          ok = false;
          break;
        }
        double v = eff.lo + rng.uniform() * eff.width();
        point[row.offset] = v;
        point[row.offset + 1] = 1.0 - v;
      } else {
        Eigen::VectorXd raw(row.dim);
        for (int j = 0; j < row.dim; ++j) raw[j] = -std::log(1.0 - rng.uniform() + 1e-300);
        raw /= raw.sum();
        for (int j = 0; j < row.dim; ++j) {
          point[row.offset + j] = raw[j];
          if (!row.box[size_t(j)].contains(raw[j], 0.0)) ok = false;
        }
      }
    }
    if (!ok) continue;
    copy_to_followers(params, point);
    if (direct_violation(net, params, point) <= tol) accepted.push_back(std::move(point));
  }
  return accepted;
}

namespace {

// lattice candidates for one representative row at the given step
std::vector<Eigen::VectorXd> row_candidates(const FreeParams::Row& row, double step) {
  std::vector<Eigen::VectorXd> out;
  long units = std::lround(1.0 / step);
  if (row.dim == 2) {
    Interval eff = intersect(row.box[0], Interval{1.0 - row.box[1].hi, 1.0 - row.box[1].lo});
    for (long u = 0; u <= units; ++u) {
      double v = double(u) / double(units);
      if (!eff.contains(v, 1e-12)) continue;
      Eigen::VectorXd cand(2);
      cand << v, 1.0 - v;
      out.push_back(std::move(cand));
    }
    return out;
  }
  // compositions of `units` into dim cells
  std::vector<long> cells(size_t(row.dim), 0);
  std::function<void(int, long)> rec = [&](int idx, long left) {
    if (idx == row.dim - 1) {
      cells[size_t(idx)] = left;
      Eigen::VectorXd cand(row.dim);
      for (int j = 0; j < row.dim; ++j) {
        cand[j] = double(cells[size_t(j)]) / double(units);
        if (!row.box[size_t(j)].contains(cand[j], 1e-12)) return;
      }
      out.push_back(std::move(cand));
      return;
    }
    for (long u = 0; u <= left; ++u) {
      cells[size_t(idx)] = u;
      double v = double(u) / double(units);
      if (!row.box[size_t(idx)].contains(v, 1e-12)) continue;
      rec(idx + 1, left - u);
    }
  };
  rec(0, units);
  return out;
}

void assign_row(const FreeParams::Row& row, const Eigen::VectorXd& cand, Eigen::VectorXd& point) {
  for (int j = 0; j < row.dim; ++j) point[row.offset + j] = cand[j];
}

// pairwise mass shifts inside representative rows, keeping feasibility
template <typename Feasible, typename Value>
bool coordinate_refine(const FreeParams& params, const std::vector<size_t>& reps,
                       Eigen::VectorXd& point, double step, Feasible&& feasible,
                       bool maximize_sense, Value&& value_of, double& best) {
  bool any = false;
  bool moving = true;
  int guard = 0;
  while (moving && guard++ < 200) {
    moving = false;
    for (size_t r : reps) {
      const auto& row = params.rows[r];
      for (int a = 0; a < row.dim; ++a) {
        for (int b = 0; b < row.dim; ++b) {
          if (a == b) continue;
          Eigen::VectorXd trial = point;
          trial[row.offset + a] += step;
          trial[row.offset + b] -= step;
          if (!row.box[size_t(a)].contains(trial[row.offset + a], 1e-12)) continue;
          if (!row.box[size_t(b)].contains(trial[row.offset + b], 1e-12)) continue;
          copy_to_followers(params, trial);
          if (!feasible(trial)) continue;
          double v;
          try {
            v = value_of(trial);
          } catch (const Error&) {
            continue;
          }
          double score = maximize_sense ? v : -v;
          double cur = maximize_sense ? best : -best;
          if (score > cur + 1e-13) {
            point = std::move(trial);
            best = v;
            moving = true;
            any = true;
          }
        }
      }
    }
  }
  return any;
}

}  // namespace

Interval grid_bounds(const Network& net, const Query& query, QueryKind kind,
                     const GridSpec& grid) {
  FreeParams params = free_parameters(net);
  if (params.free_count() > 8) throw Error("grid oracle limited to 8 free parameters");

  std::vector<size_t> reps;
  for (size_t r = 0; r < params.rows.size(); ++r)
    if (params.rows[r].rep == int(r)) reps.push_back(r);

  std::vector<std::vector<Eigen::VectorXd>> candidates;
  long total = 1;
  for (size_t r : reps) {
    candidates.push_back(row_candidates(params.rows[r], grid.step));
    if (candidates.back().empty()) throw Error("no feasible grid point found");
    total *= long(candidates.back().size());
  }

  const double feas_tol = 1e-9 + 0.0 * grid.step;  // inequalities filter strictly
  double best_min = kInf, best_max = -kInf;
  Eigen::VectorXd arg_min, arg_max;

  auto evaluate_chunk = [&](long begin, long end, double& lo, double& hi, Eigen::VectorXd& alo,
                            Eigen::VectorXd& ahi) {
    Eigen::VectorXd point(params.point_dim);
    for (long idx = begin; idx < end; ++idx) {
      long rem = idx;
      for (size_t ri = reps.size(); ri-- > 0;) {
        const auto& list = candidates[ri];
        assign_row(params.rows[reps[ri]], list[size_t(rem % long(list.size()))], point);
        rem /= long(list.size());
      }
      copy_to_followers(params, point);
      if (direct_violation(net, params, point) > feas_tol) continue;
      double v;
      try {
        RowTables rows = materialize_rows(net, params, point);
        v = query_value(net, rows, query, kind);
      } catch (const Error&) {
        continue;  // zero-probability evidence at this point
      }
      if (v < lo) {
        lo = v;
        alo = point;
      }
      if (v > hi) {
        hi = v;
        ahi = point;
      }
    }
  };

  int threads = std::max(1, grid.threads);
  if (threads == 1 || total < 4096) {
    evaluate_chunk(0, total, best_min, best_max, arg_min, arg_max);
  } else {
    std::vector<double> lo(size_t(threads), kInf), hi(size_t(threads), -kInf);
    std::vector<Eigen::VectorXd> alo(static_cast<size_t>(threads));
    std::vector<Eigen::VectorXd> ahi(static_cast<size_t>(threads));
    std::vector<std::thread> pool;
    long chunk = (total + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      long begin = t * chunk, end = std::min(total, begin + chunk);
      pool.emplace_back([&, t, begin, end]() {
        evaluate_chunk(begin, end, lo[size_t(t)], hi[size_t(t)], alo[size_t(t)], ahi[size_t(t)]);
      });
    }
    for (auto& th : pool) th.join();
    for (int t = 0; t < threads; ++t) {  // ordered deterministic merge
      if (lo[size_t(t)] < best_min) {
        best_min = lo[size_t(t)];
        arg_min = alo[size_t(t)];
      }
      if (hi[size_t(t)] > best_max) {
        best_max = hi[size_t(t)];
        arg_max = ahi[size_t(t)];
      }
    }
  }
  if (best_min > best_max) throw Error("no feasible grid point found");

  auto value_of = [&](const Eigen::VectorXd& point) {
    RowTables rows = materialize_rows(net, params, point);
    return query_value(net, rows, query, kind);
  };
  auto feasible = [&](const Eigen::VectorXd& point) {
    return direct_violation(net, params, point) <= feas_tol;
  };
  double refine_step = grid.step;
  for (int round = 0; round < grid.refine_rounds; ++round) {
    refine_step /= 10.0;
    coordinate_refine(params, reps, arg_min, refine_step, feasible, false, value_of, best_min);
    coordinate_refine(params, reps, arg_max, refine_step, feasible, true, value_of, best_max);
  }
  return Interval{best_min, best_max};
}

GridMlResult grid_ml(const Network& net, const Counts& counts, const GridSpec& grid) {
  GridMlResult result;
  result.estimates.resize(net.nodes.size());

  for (const auto& spec : net.nodes) {
    int i = spec.variable;
    int card = net.var(i).cardinality();
    int configs = net.family_config_count(i);

    // numeric rows stay fixed
    for (const auto& [k, row] : spec.numeric_rows) result.estimates[size_t(i)][k] = row;

    std::vector<int> free_configs;
    for (int k = 0; k < configs; ++k)
      if (!spec.has_numeric(k)) free_configs.push_back(k);
    if (free_configs.empty()) continue;

    long units = std::lround(1.0 / grid.step);
    auto row_box = [&](int k, int j) {
      Interval box{0.0, 1.0};
      auto iv = spec.interval_rows.find({j, k});
      if (iv != spec.interval_rows.end()) box = intersect(box, iv->second);
      return box;
    };
    auto row_ll = [&](int k, const Eigen::VectorXd& values) {
      double ll = 0.0;
      const Eigen::VectorXd& n = counts.row(i, k);
      for (int j = 0; j < card; ++j)
        if (n[j] > 0) ll += n[j] * std::log(std::max(values[j], 1e-300));
      return ll;
    };

    if (spec.relations.empty()) {
      // separable: per-row lattice argmax
      for (int k : free_configs) {
        double best = -kInf;
        Eigen::VectorXd best_row;
        std::function<void(int, long, Eigen::VectorXd&)> rec = [&](int j, long left,
                                                                   Eigen::VectorXd& acc) {
          if (j == card - 1) {
            acc[j] = double(left) / double(units);
            if (!row_box(k, j).contains(acc[j], 1e-12)) return;
            double ll = row_ll(k, acc);
            if (ll > best) {
              best = ll;
              best_row = acc;
            }
            return;
          }
          for (long u = 0; u <= left; ++u) {
            acc[j] = double(u) / double(units);
            if (!row_box(k, j).contains(acc[j], 1e-12)) continue;
            rec(j + 1, left - u, acc);
          }
        };
        Eigen::VectorXd acc(card);
        rec(0, units, acc);
        if (best == -kInf) throw Error("no feasible grid point found");
        result.estimates[size_t(i)][k] = best_row;
      }
      continue;
    }

    // constrained family: depth-first lattice search with likelihood bounding
    FreeParams sub;
    std::map<int, size_t> depth_of;  // config -> row depth in the search
    for (int k : free_configs) {
      FreeParams::Row row;
      row.node = i;
      row.config = k;
      row.role = VarRole::theta;
      row.dim = card;
      row.offset = sub.point_dim;
      row.rep = int(sub.rows.size());
      for (int j = 0; j < card; ++j) row.box.push_back(row_box(k, j));
      depth_of[k] = sub.rows.size();
      sub.point_dim += card;
      sub.rows.push_back(std::move(row));
    }
    if (sub.point_dim - int(sub.rows.size()) > 8) throw Error("constrained family too large");

    std::vector<std::vector<Eigen::VectorXd>> candidates;
    std::vector<std::vector<double>> cand_ll;
    std::vector<double> suffix_best(sub.rows.size() + 1, 0.0);
    for (size_t r = 0; r < sub.rows.size(); ++r) {
      candidates.push_back(row_candidates(sub.rows[r], grid.step));
      if (candidates.back().empty()) throw Error("no feasible grid point found");
      std::vector<double> lls;
      double best = -kInf;
      for (const auto& cand : candidates.back()) {
        double ll = row_ll(sub.rows[r].config, cand);
        lls.push_back(ll);
        best = std::max(best, ll);
      }
      cand_ll.push_back(std::move(lls));
      suffix_best[r] = best;
    }
    for (size_t r = sub.rows.size(); r-- > 0;) suffix_best[r] += suffix_best[r + 1];

    // Flatten every relation into value-level checks, each fireable as soon
    // as all of its configurations are assigned.
    struct GridCheck {
      Sign sign;
      double delta = 0.0;
      RelationKind kind;
      int arity = 2;  // 2: pair difference, 4: synergy
      int j = 0;
      std::array<int, 4> cfg{{-1, -1, -1, -1}};
      size_t ready = 0;
    };
    std::vector<GridCheck> checks;
    auto depth_ready = [&](std::initializer_list<int> cfgs) {
      size_t d = 0;
      for (int k : cfgs) {
        auto it = depth_of.find(k);
        if (it != depth_of.end()) d = std::max(d, it->second);
      }
      return d;
    };
    for (const auto& rel : spec.relations) {
      if (rel.sign == Sign::ambiguous) continue;
      const auto& ps = spec.parents;
      auto pos_of = [&](int v) {
        return size_t(std::find(ps.begin(), ps.end(), v) - ps.begin());
      };
      switch (rel.kind) {
        case RelationKind::influence:
        case RelationKind::weak:
        case RelationKind::strong: {
          size_t pa = pos_of(rel.sources[0]);
          each_context(net, i, rel.sources, [&](std::vector<int>& ctx) {
            GridCheck chk;
            chk.sign = rel.sign;
            chk.delta = rel.delta;
            chk.kind = rel.kind;
            ctx[pa] = 0;
            chk.cfg[0] = net.parent_config_index(i, ctx);
            ctx[pa] = 1;
            chk.cfg[1] = net.parent_config_index(i, ctx);
            chk.ready = depth_ready({chk.cfg[0], chk.cfg[1]});
            checks.push_back(chk);
          });
          break;
        }
        case RelationKind::situational: {
          size_t pa = pos_of(rel.sources[0]);
          std::vector<int> ctx(ps.size(), 0);
          for (size_t m = 0; m < ps.size(); ++m) {
            auto it = rel.context.find(ps[m]);
            if (it != rel.context.end()) ctx[m] = it->second;
          }
          GridCheck chk;
          chk.sign = rel.sign;
          chk.kind = RelationKind::influence;
          ctx[pa] = 0;
          chk.cfg[0] = net.parent_config_index(i, ctx);
          ctx[pa] = 1;
          chk.cfg[1] = net.parent_config_index(i, ctx);
          chk.ready = depth_ready({chk.cfg[0], chk.cfg[1]});
          checks.push_back(chk);
          break;
        }
        case RelationKind::additive_synergy:
        case RelationKind::product_synergy: {
          size_t pa = pos_of(rel.sources[0]), pb = pos_of(rel.sources[1]);
          each_context(net, i, rel.sources, [&](std::vector<int>& ctx) {
            GridCheck chk;
            chk.sign = rel.sign;
            chk.kind = rel.kind;
            chk.arity = 4;
            chk.j = rel.kind == RelationKind::product_synergy ? rel.target_value : 0;
            ctx[pa] = 0; ctx[pb] = 0;
            chk.cfg[0] = net.parent_config_index(i, ctx);
            ctx[pa] = 1; ctx[pb] = 1;
            chk.cfg[1] = net.parent_config_index(i, ctx);
            ctx[pa] = 1; ctx[pb] = 0;
            chk.cfg[2] = net.parent_config_index(i, ctx);
            ctx[pa] = 0; ctx[pb] = 1;
            chk.cfg[3] = net.parent_config_index(i, ctx);
            chk.ready = depth_ready({chk.cfg[0], chk.cfg[1], chk.cfg[2], chk.cfg[3]});
            checks.push_back(chk);
          });
          break;
        }
      }
    }
    std::vector<std::vector<const GridCheck*>> checks_at(sub.rows.size());
    for (const auto& chk : checks) checks_at[chk.ready].push_back(&chk);

    Eigen::VectorXd point(sub.point_dim);
    auto cfg_value = [&](int k, int j) {
      auto it = depth_of.find(k);
      if (it == depth_of.end()) return spec.numeric_rows.at(k)[j];
      return point[sub.rows[it->second].offset + j];
    };
    auto check_ok = [&](const GridCheck& chk) {
      double v;
      if (chk.arity == 2) {
        v = cfg_value(chk.cfg[0], 0) - cfg_value(chk.cfg[1], 0);
        return pair_violation(chk.sign, v, chk.delta, chk.kind) <= 1e-9;
      }
      if (chk.kind == RelationKind::additive_synergy) {
        v = cfg_value(chk.cfg[0], 0) + cfg_value(chk.cfg[1], 0) - cfg_value(chk.cfg[2], 0) -
            cfg_value(chk.cfg[3], 0);
      } else {
        v = cfg_value(chk.cfg[0], chk.j) * cfg_value(chk.cfg[1], chk.j) -
            cfg_value(chk.cfg[3], chk.j) * cfg_value(chk.cfg[2], chk.j);
      }
      return pair_violation(chk.sign, v, 0.0, RelationKind::influence) <= 1e-9;
    };

    double best_total = -kInf;
    Eigen::VectorXd best_point(sub.point_dim);
    std::function<void(size_t, double)> dfs = [&](size_t r, double acc) {
      if (r == sub.rows.size()) {
        best_total = acc;
        best_point = point;
        return;
      }
      if (acc + suffix_best[r] <= best_total) return;
      for (size_t c = 0; c < candidates[r].size(); ++c) {
        if (acc + cand_ll[r][c] + suffix_best[r + 1] <= best_total) continue;
        assign_row(sub.rows[r], candidates[r][c], point);
        bool ok = true;
        for (const GridCheck* chk : checks_at[r])
          if (!check_ok(*chk)) {
            ok = false;
            break;
          }
        if (!ok) continue;
        dfs(r + 1, acc + cand_ll[r][c]);
      }
    };
    dfs(0, 0.0);
    if (best_total == -kInf) throw Error("no feasible grid point found");

    // coordinate refinement at step/10 per round
    std::vector<size_t> reps;
    for (size_t r = 0; r < sub.rows.size(); ++r) reps.push_back(r);
    auto value_of = [&](const Eigen::VectorXd& q) {
      double ll = 0.0;
      for (size_t r0 = 0; r0 < sub.rows.size(); ++r0) {
        Eigen::VectorXd values(card);
        for (int j = 0; j < card; ++j) values[j] = q[sub.rows[r0].offset + j];
        ll += row_ll(sub.rows[r0].config, values);
      }
      return ll;
    };
    auto feasible = [&](const Eigen::VectorXd& q) {
      Eigen::VectorXd saved = point;
      point = q;
      bool ok = true;
      for (const auto& chk : checks)
        if (!check_ok(chk)) {
          ok = false;
          break;
        }
      point = std::move(saved);
      return ok;
    };
    double refine_step = grid.step;
    for (int round = 0; round < grid.refine_rounds; ++round) {
      refine_step /= 10.0;
      coordinate_refine(sub, reps, best_point, refine_step, feasible, true, value_of, best_total);
    }
    for (size_t r = 0; r < sub.rows.size(); ++r) {
      Eigen::VectorXd values(card);
      for (int j = 0; j < card; ++j) values[j] = best_point[sub.rows[r].offset + j];
      result.estimates[size_t(i)][sub.rows[r].config] = values;
    }
  }

  result.log_likelihood = log_likelihood(counts, result.estimates);
  return result;
}

bool emajsat_brute(const BooleanFormula& phi, int k) {
  std::vector<std::string> names = formula_variables(phi);
  int n = static_cast<int>(names.size());
  if (k < 1 || k > n) throw Error("split point k out of range");
  if (n > 12) throw Error("emajsat oracle limited to 12 variables");

  long worlds = 1L << (n - k);
  for (long assignment = 0; assignment < (1L << k); ++assignment) {
    long sat = 0;
    for (long world = 0; world < worlds; ++world) {
      std::map<std::string, bool> values;
      for (int i = 0; i < k; ++i) values[names[size_t(i)]] = (assignment >> i) & 1;
      for (int i = k; i < n; ++i) values[names[size_t(i)]] = (world >> (i - k)) & 1;
      if (phi.evaluate(values)) ++sat;
    }
    if (2 * sat > worlds) return true;  // strict majority
  }
  return false;
}

}  // namespace sqpn
