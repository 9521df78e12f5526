#include "sqpn/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sqpn/errors.hpp"
#include "sqpn/formula.hpp"

namespace sqpn {

using nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

int value_index(const Variable& var, const std::string& value, const std::string& where) {
  auto it = std::find(var.value_names.begin(), var.value_names.end(), value);
  if (it == var.value_names.end())
    throw ParseError(where + ": unknown value '" + value + "' for variable " + var.name);
  return int(it - var.value_names.begin());
}

// "y,~z" -> parent configuration index, resolving value names per parent
int config_from_key(const Network& net, int node, const std::string& key) {
  const auto& parents = net.node(node).parents;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (key.empty()) parts.clear();
  if (parts.size() != parents.size())
    throw ParseError("node " + net.var(node).name + ": config key '" + key + "' must name " +
                     std::to_string(parents.size()) + " parent value(s)");
  std::vector<int> values;
  for (size_t m = 0; m < parents.size(); ++m)
    values.push_back(value_index(net.var(parents[m]), parts[m],
                                 "node " + net.var(node).name + " config '" + key + "'"));
  return net.parent_config_index(node, values);
}

std::string key_of_config(const Network& net, int node, int config) {
  const auto& parents = net.node(node).parents;
  std::vector<int> values = net.parent_config_values(node, config);
  std::string key;
  for (size_t m = 0; m < parents.size(); ++m) {
    if (m) key += ",";
    key += net.var(parents[m]).value_names[size_t(values[m])];
  }
  return key;
}

Eigen::VectorXd parse_row(const ordered_json& row, int card, const std::string& where) {
  if (!row.is_array() || int(row.size()) != card)
    throw ParseError(where + ": expected an array of " + std::to_string(card) + " numbers");
  Eigen::VectorXd out(card);
  for (int j = 0; j < card; ++j) {
    if (!row[size_t(j)].is_number()) throw ParseError(where + ": entries must be numbers");
    out[j] = row[size_t(j)].get<double>();
  }
  return out;
}

RelationKind kind_from_name(const std::string& name) {
  for (RelationKind k :
       {RelationKind::influence, RelationKind::additive_synergy, RelationKind::product_synergy,
        RelationKind::situational, RelationKind::weak, RelationKind::strong}) {
    if (relation_kind_name(k) == name) return k;
  }
  throw ParseError("unknown relation kind '" + name + "'");
}

void parse_node(const ordered_json& doc, Network& net, int id) {
  NodeSpec& spec = net.node(id);
  const std::string where = "node " + net.var(id).name;
  int card = net.var(id).cardinality();

  if (doc.contains("parents")) {
    for (const auto& p : doc.at("parents")) {
      int pid = net.variable_index(p.get<std::string>());
      if (pid < 0) throw ParseError(where + ": unknown parent '" + p.get<std::string>() + "'");
      spec.parents.push_back(pid);
    }
  }
  if (doc.contains("qualitative")) spec.qualitative = doc.at("qualitative").get<bool>();

  auto parse_rows = [&](const ordered_json& j, const std::string& field,
                        std::map<int, Eigen::VectorXd>& into) {
    if (j.is_array()) {
      if (!spec.parents.empty())
        throw ParseError(where + ": " + field + " array form is only valid for root nodes");
      into[0] = parse_row(j, card, where + " " + field);
      return;
    }
    for (const auto& [key, row] : j.items())
      into[config_from_key(net, id, key)] = parse_row(row, card, where + " " + field + " '" + key + "'");
  };
  if (doc.contains("cpt")) parse_rows(doc.at("cpt"), "cpt", spec.numeric_rows);
  if (doc.contains("tau")) parse_rows(doc.at("tau"), "tau", spec.tau_rows);

  if (doc.contains("intervals")) {
    for (const auto& [key, rows] : doc.at("intervals").items()) {
      int k = config_from_key(net, id, key);
      if (!rows.is_array() || int(rows.size()) != card)
        throw ParseError(where + ": intervals '" + key + "' must list one [lo, hi] per value");
      for (int j = 0; j < card; ++j) {
        if (rows[size_t(j)].is_null()) continue;
        if (!rows[size_t(j)].is_array() || rows[size_t(j)].size() != 2)
          throw ParseError(where + ": interval entries are [lo, hi] pairs");
        spec.interval_rows[{j, k}] = Interval{rows[size_t(j)][0].get<double>(),
                                              rows[size_t(j)][1].get<double>()};
      }
    }
  }

  if (doc.contains("relations")) {
    for (const auto& r : doc.at("relations")) {
      QualitativeRelation rel;
      rel.kind = kind_from_name(r.at("kind").get<std::string>());
      std::string sign = r.at("sign").get<std::string>();
      if (sign.size() != 1) throw ParseError(where + ": sign must be one of + - 0 ?");
      rel.sign = sign_from_symbol(sign[0]);
      for (const auto& s : r.at("sources")) {
        int sid = net.variable_index(s.get<std::string>());
        if (sid < 0) throw ParseError(where + ": unknown relation source");
        rel.sources.push_back(sid);
      }
      if (r.contains("delta")) rel.delta = r.at("delta").get<double>();
      if (r.contains("context")) {
        for (const auto& [vname, valname] : r.at("context").items()) {
          int v = net.variable_index(vname);
          if (v < 0) throw ParseError(where + ": unknown context variable " + vname);
          rel.context[v] = value_index(net.var(v), valname.get<std::string>(), where);
        }
      }
      if (r.contains("target"))
        rel.target_value = value_index(net.var(id), r.at("target").get<std::string>(), where);
      spec.relations.push_back(std::move(rel));
    }
  }

  if (doc.contains("idm")) {
    const auto& idm = doc.at("idm");
    double s = idm.at("s").get<double>();
    for (const auto& [key, row] : idm.at("counts").items()) {
      IdmRow r;
      r.s = s;
      r.counts = parse_row(row, card, where + " idm counts '" + key + "'");
      spec.idm_rows[config_from_key(net, id, key)] = std::move(r);
    }
  }
}

}  // namespace

Network load_network(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("network document is not valid JSON: ") + e.what());
  }
  Network net;
  if (!doc.contains("variables") || !doc.at("variables").is_array())
    throw ParseError("network document needs a 'variables' array");
  for (const auto& v : doc.at("variables")) {
    std::vector<std::string> values;
    for (const auto& name : v.at("values")) values.push_back(name.get<std::string>());
    net.add_variable(v.at("name").get<std::string>(), std::move(values));
  }
  if (doc.contains("nodes")) {
    for (const auto& [name, node] : doc.at("nodes").items()) {
      int id = net.variable_index(name);
      if (id < 0) throw ParseError("nodes entry for unknown variable '" + name + "'");
      parse_node(node, net, id);
    }
  }
  if (doc.contains("logic_assessments")) {
    for (const auto& a : doc.at("logic_assessments")) {
      LogicAssessment la;
      la.formula = a.at("formula").get<std::string>();
      parse_formula(la.formula);  // surface syntax errors at load time
      if (a.contains("condition"))
        for (const auto& [vname, valname] : a.at("condition").items())
          la.condition[vname] = valname.get<std::string>();
      la.alpha = a.at("alpha").get<double>();
      net.logic_assessments.push_back(std::move(la));
    }
  }

  ValidationReport report = validate_network(net);
  if (!report.ok()) throw ValidationError("invalid network:\n" + report.str());
  return net;
}

Network load_network_file(const std::string& path) { return load_network(read_file(path)); }

nlohmann::ordered_json network_document(const Network& net) {
  ordered_json doc;
  doc["variables"] = ordered_json::array();
  for (const auto& v : net.variables) {
    ordered_json var;
    var["name"] = v.name;
    var["values"] = v.value_names;
    doc["variables"].push_back(var);
  }
  doc["nodes"] = ordered_json::object();
  for (const auto& spec : net.nodes) {
    ordered_json node;
    ordered_json parents = ordered_json::array();
    for (int p : spec.parents) parents.push_back(net.var(p).name);
    node["parents"] = parents;
    if (spec.qualitative) node["qualitative"] = true;
    if (!spec.numeric_rows.empty()) {
      ordered_json cpt;
      for (const auto& [k, row] : spec.numeric_rows) {
        std::vector<double> values(row.data(), row.data() + row.size());
        cpt[key_of_config(net, spec.variable, k)] = values;
      }
      node["cpt"] = cpt;
    }
    if (!spec.interval_rows.empty()) {
      ordered_json intervals;
      int card = net.var(spec.variable).cardinality();
      std::set<int> configs;
      for (const auto& [jk, iv] : spec.interval_rows) {
        (void)iv;
        configs.insert(jk.second);
      }
      for (int k : configs) {
        ordered_json rows = ordered_json::array();
        for (int j = 0; j < card; ++j) {
          auto it = spec.interval_rows.find({j, k});
          if (it == spec.interval_rows.end())
            rows.push_back(nullptr);
          else
            rows.push_back(std::vector<double>{it->second.lo, it->second.hi});
        }
        intervals[key_of_config(net, spec.variable, k)] = rows;
      }
      node["intervals"] = intervals;
    }
    if (!spec.relations.empty()) {
      ordered_json relations = ordered_json::array();
      for (const auto& rel : spec.relations) {
        ordered_json r;
        r["kind"] = relation_kind_name(rel.kind);
        r["sign"] = std::string(1, sign_symbol(rel.sign));
        ordered_json sources = ordered_json::array();
        for (int s : rel.sources) sources.push_back(net.var(s).name);
        r["sources"] = sources;
        if (rel.kind == RelationKind::weak || rel.kind == RelationKind::strong)
          r["delta"] = rel.delta;
        if (!rel.context.empty()) {
          ordered_json ctx;
          for (const auto& [v, val] : rel.context)
            ctx[net.var(v).name] = net.var(v).value_names[size_t(val)];
          r["context"] = ctx;
        }
        if (rel.kind == RelationKind::product_synergy)
          r["target"] = net.var(spec.variable).value_names[size_t(rel.target_value)];
        relations.push_back(r);
      }
      node["relations"] = relations;
    }
    if (!spec.tau_rows.empty()) {
      ordered_json tau;
      for (const auto& [k, row] : spec.tau_rows) {
        std::vector<double> values(row.data(), row.data() + row.size());
        tau[key_of_config(net, spec.variable, k)] = values;
      }
      node["tau"] = tau;
    }
    if (!spec.idm_rows.empty()) {
      ordered_json idm;
      idm["s"] = spec.idm_rows.begin()->second.s;
      ordered_json cnt;
      for (const auto& [k, row] : spec.idm_rows) {
        std::vector<double> values(row.counts.data(), row.counts.data() + row.counts.size());
        cnt[key_of_config(net, spec.variable, k)] = values;
      }
      idm["counts"] = cnt;
      node["idm"] = idm;
    }
    doc["nodes"][net.var(spec.variable).name] = node;
  }
  if (!net.logic_assessments.empty()) {
    ordered_json list = ordered_json::array();
    for (const auto& a : net.logic_assessments) {
      ordered_json item;
      item["formula"] = a.formula;
      if (!a.condition.empty()) item["condition"] = a.condition;
      item["alpha"] = a.alpha;
      list.push_back(item);
    }
    doc["logic_assessments"] = list;
  }
  return doc;
}

std::string save_network(const Network& net) { return network_document(net).dump(2) + "\n"; }

Dataset load_dataset(const std::string& text, const Network& net) {
  std::stringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) throw ParseError("dataset is empty (missing header)");
  std::vector<int> columns;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      int id = net.variable_index(trim(cell));
      if (id < 0) throw ParseError("dataset header names unknown variable '" + trim(cell) + "'");
      columns.push_back(id);
    }
  }
  std::set<int> seen(columns.begin(), columns.end());
  if (int(seen.size()) != net.size() || seen.size() != columns.size())
    throw ParseError("dataset header must name every network variable exactly once");

  Dataset data;
  long line_no = 1;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != columns.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(columns.size()) + " cells");
    std::vector<int> record(size_t(net.size()), -1);
    for (size_t c = 0; c < columns.size(); ++c) {
      if (cells[c].empty())
        throw ParseError("line " + std::to_string(line_no) + ": missing data unsupported");
      record[size_t(columns[c])] =
          value_index(net.var(columns[c]), cells[c], "line " + std::to_string(line_no));
    }
    data.records.push_back(std::move(record));
  }
  return data;
}

Dataset load_dataset_file(const std::string& path, const Network& net) {
  return load_dataset(read_file(path), net);
}

std::string write_report(const QueryReport& report) {
  ordered_json doc;
  doc["query"] = report.query;
  doc["evidence"] = report.evidence;
  doc["objective"] = report.objective;
  doc["interval"] = std::vector<double>{report.interval.lo, report.interval.hi};
  doc["inner"] = std::vector<double>{report.inner.lo, report.inner.hi};
  if (report.sign) {
    doc["sign"] = sign_word(*report.sign);
    doc["eps"] = report.eps;
  }
  doc["gap"] = report.gap;
  doc["nodes"] = report.nodes;
  doc["status"] = report.status;
  doc["options"] = {{"gap", report.gap_tol}, {"max_nodes", report.max_nodes},
                    {"seed", report.seed}};
  if (report.wall_ms) doc["wall_ms"] = *report.wall_ms;
  return doc.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
}

}  // namespace sqpn
