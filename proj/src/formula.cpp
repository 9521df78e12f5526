#include "sqpn/formula.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "sqpn/errors.hpp"

namespace sqpn {

bool BooleanFormula::evaluate(const std::map<std::string, bool>& assignment) const {
  switch (kind) {
    case Kind::variable: {
      auto it = assignment.find(name);
      if (it == assignment.end()) throw Error("formula variable " + name + " unassigned");
      return it->second;
    }
    case Kind::negation:
      return !operands[0].evaluate(assignment);
    case Kind::conjunction:
      return operands[0].evaluate(assignment) && operands[1].evaluate(assignment);
    case Kind::disjunction:
      return operands[0].evaluate(assignment) || operands[1].evaluate(assignment);
  }
  return false;
}

int BooleanFormula::operator_count() const {
  int n = kind == Kind::variable ? 0 : 1;
  for (const auto& op : operands) n += op.operator_count();
  return n;
}

namespace {

struct Parser {
  const std::string& text;
  size_t pos = 0;

  void skip() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw ParseError("formula parse error at position " + std::to_string(pos) + ": " + what);
  }

  BooleanFormula parse_or() {
    BooleanFormula lhs = parse_and();
    while (eat('|')) {
      BooleanFormula node;
      node.kind = BooleanFormula::Kind::disjunction;
      node.operands.push_back(std::move(lhs));
      node.operands.push_back(parse_and());
      lhs = std::move(node);
    }
    return lhs;
  }

  BooleanFormula parse_and() {
    BooleanFormula lhs = parse_unary();
    while (eat('&')) {
      BooleanFormula node;
      node.kind = BooleanFormula::Kind::conjunction;
      node.operands.push_back(std::move(lhs));
      node.operands.push_back(parse_unary());
      lhs = std::move(node);
    }
    return lhs;
  }

  BooleanFormula parse_unary() {
    if (eat('!')) {
      BooleanFormula node;
      node.kind = BooleanFormula::Kind::negation;
      node.operands.push_back(parse_unary());
      return node;
    }
    if (eat('(')) {
      BooleanFormula inner = parse_or();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    skip();
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    if (pos == start) fail("expected identifier");
    if (std::isdigit(static_cast<unsigned char>(text[start]))) fail("identifier cannot start with a digit");
    BooleanFormula node;
    node.kind = BooleanFormula::Kind::variable;
    node.name = text.substr(start, pos - start);
    return node;
  }
};

void collect(const BooleanFormula& f, std::set<std::string>& out) {
  if (f.kind == BooleanFormula::Kind::variable) out.insert(f.name);
  for (const auto& op : f.operands) collect(op, out);
}

}  // namespace

BooleanFormula parse_formula(const std::string& text) {
  Parser parser{text};
  BooleanFormula f = parser.parse_or();
  parser.skip();
  if (parser.pos != text.size()) parser.fail("trailing input");
  return f;
}

std::string to_string(const BooleanFormula& f) {
  switch (f.kind) {
    case BooleanFormula::Kind::variable:
      return f.name;
    case BooleanFormula::Kind::negation:
      return "!" + (f.operands[0].kind == BooleanFormula::Kind::variable
                        ? to_string(f.operands[0])
                        : "(" + to_string(f.operands[0]) + ")");
    case BooleanFormula::Kind::conjunction:
      return "(" + to_string(f.operands[0]) + " & " + to_string(f.operands[1]) + ")";
    case BooleanFormula::Kind::disjunction:
      return "(" + to_string(f.operands[0]) + " | " + to_string(f.operands[1]) + ")";
  }
  return "";
}

std::vector<std::string> formula_variables(const BooleanFormula& f) {
  std::set<std::string> names;
  collect(f, names);
  return std::vector<std::string>(names.begin(), names.end());
}

namespace {

// Builds one deterministic operator node per formula operator, bottom-up.
// Returns the variable id carrying the subformula's truth value: either a
// root variable for leaves or the fresh operator node. Value 0 means "true".
// Operators are numbered so that the childless root operator becomes W0.
int build_operators(const BooleanFormula& f, Network& net,
                    const std::map<std::string, int>& roots, int& remaining) {
  if (f.kind == BooleanFormula::Kind::variable) return roots.at(f.name);
  std::vector<int> heads;
  for (const auto& op : f.operands) heads.push_back(build_operators(op, net, roots, remaining));

  int w = net.add_variable("W" + std::to_string(--remaining), {"t", "f"});
  NodeSpec& spec = net.node(w);
  spec.parents = heads;
  int configs = net.family_config_count(w);
  for (int k = 0; k < configs; ++k) {
    std::vector<int> values = net.parent_config_values(w, k);
    bool truth = false;
    switch (f.kind) {
      case BooleanFormula::Kind::negation: truth = values[0] != 0; break;
      case BooleanFormula::Kind::conjunction: truth = values[0] == 0 && values[1] == 0; break;
      case BooleanFormula::Kind::disjunction: truth = values[0] == 0 || values[1] == 0; break;
      case BooleanFormula::Kind::variable: break;
    }
    Eigen::VectorXd row(2);
    row << (truth ? 1.0 : 0.0), (truth ? 0.0 : 1.0);
    spec.numeric_rows[k] = row;
  }
  return w;
}

}  // namespace

std::pair<Network, Query> build_emajsat_gadget(const BooleanFormula& phi, int k) {
  std::vector<std::string> names = formula_variables(phi);
  int n = static_cast<int>(names.size());
  if (n == 0) throw Error("formula mentions no variables");
  if (k < 1 || k > n) throw Error("split point k must satisfy 1 <= k <= " + std::to_string(n));

  Network net;
  std::map<std::string, int> roots;
  Eigen::VectorXd uniform(2);
  uniform << 0.5, 0.5;
  for (int i = 0; i < n; ++i) {
    int id = net.add_variable(names[size_t(i)], {"t", "f"});
    roots[names[size_t(i)]] = id;
    if (i < k) {
      net.node(id).qualitative = true;  // parameter-free binary root
    } else {
      net.node(id).numeric_rows[0] = uniform;  // uniform prior world variable
    }
  }

  int remaining = phi.operator_count();
  int head = build_operators(phi, net, roots, remaining);
  if (head < n) {
    // bare-variable formula: wrap in an identity operator so W0 exists
    int w = net.add_variable("W0", {"t", "f"});
    NodeSpec& spec = net.node(w);
    spec.parents = {head};
    Eigen::VectorXd tt(2), ff(2);
    tt << 1.0, 0.0;
    ff << 0.0, 1.0;
    spec.numeric_rows[0] = tt;
    spec.numeric_rows[1] = ff;
    head = w;
  }

  int e = net.add_variable("E", {"e", "~e"});
  net.node(e).qualitative = true;

  int q = net.add_variable("Q", {"q", "~q"});
  NodeSpec& qspec = net.node(q);
  qspec.parents = {head, e};
  auto row = [](double p) {
    Eigen::VectorXd r(2);
    r << p, 1.0 - p;
    return r;
  };
  qspec.numeric_rows[0] = row(0.5);  // w0, e
  qspec.numeric_rows[1] = row(1.0);  // w0, ~e
  qspec.numeric_rows[2] = row(0.5);  // ~w0, e
  qspec.numeric_rows[3] = row(0.0);  // ~w0, ~e

  Query query;
  query.variable = q;
  query.value = 0;
  query.evidence = {{e, 0}};
  return {std::move(net), query};
}

}  // namespace sqpn
