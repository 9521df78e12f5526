#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sqpn/compile.hpp"
#include "sqpn/data.hpp"
#include "sqpn/errors.hpp"
#include "sqpn/formula.hpp"
#include "sqpn/learn.hpp"
#include "sqpn/model.hpp"
#include "sqpn/oracle.hpp"
#include "sqpn/solver.hpp"

namespace {

using nlohmann::ordered_json;
using namespace sqpn;

std::pair<int, int> parse_assignment(const Network& net, const std::string& text) {
  size_t eq = text.find('=');
  if (eq == std::string::npos) throw Error("expected VAR=value, got '" + text + "'");
  std::string name = text.substr(0, eq);
  std::string value = text.substr(eq + 1);
  int id = net.variable_index(name);
  if (id < 0) throw Error("unknown variable '" + name + "'");
  const auto& names = net.var(id).value_names;
  auto it = std::find(names.begin(), names.end(), value);
  if (it == names.end()) throw Error("unknown value '" + value + "' for variable " + name);
  return {id, int(it - names.begin())};
}

Evidence parse_evidence(const Network& net, const std::string& text) {
  Evidence evidence;
  if (text.empty()) return evidence;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto [id, value] = parse_assignment(net, item);
    evidence[id] = value;
  }
  return evidence;
}

void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty())
    std::cout << content;
  else
    write_file(out_path, content);
}

struct QueryArgs {
  std::string net_path, query, evidence, out, dump, progress_path;
  bool marginal = false;
  bool progress = false;
  bool timings = false;
  double eps = 1e-6;
  int threads = 1;
  SolverOptions options;
};

void add_query_flags(CLI::App* cmd, QueryArgs& args, bool with_eps) {
  cmd->add_option("--net", args.net_path, "network document")->required();
  cmd->add_option("--query", args.query, "query assignment, e.g. X=x")->required();
  cmd->add_option("--evidence", args.evidence, "comma-separated assignments, e.g. Y=y,Z=~z");
  cmd->add_flag("--marginal", args.marginal, "bound P(q) (or P(q|e)) instead of the influence");
  cmd->add_option("--gap", args.options.gap_tol, "absolute gap tolerance");
  cmd->add_option("--max-nodes", args.options.max_nodes, "node budget per bound direction");
  cmd->add_option("--seed", args.options.seed, "seed for refinement multistarts");
  cmd->add_option("--threads", args.threads, "worker threads (oracle grids only)");
  cmd->add_flag("--progress", args.progress, "stream anytime bound lines to stderr");
  cmd->add_flag("--timings", args.timings, "include wall time in the report");
  cmd->add_option("--out", args.out, "write the report here instead of stdout");
  cmd->add_option("--dump-program", args.dump, "write the compiled program (plain text)");
  if (with_eps) cmd->add_option("--eps", args.eps, "sign classification tolerance");
}

int run_query(const QueryArgs& args, bool classify) {
  Network net = load_network_file(args.net_path);
  auto [qvar, qval] = parse_assignment(net, args.query);
  Evidence evidence = parse_evidence(net, args.evidence);
  if (evidence.count(qvar)) throw Error("evidence must not mention the query variable");

  auto t0 = std::chrono::steady_clock::now();
  MultilinearProgram program;
  std::string objective;
  if (args.marginal) {
    program = pose_marginal_query(net, qvar, qval, evidence);
    objective = evidence.empty() ? "marginal" : "conditional";
  } else {
    Query query{qvar, qval, evidence};
    program = pose_influence_query(net, query);
    objective = "influence";
  }
  if (!args.dump.empty()) write_file(args.dump, dump_program(program));

  SolverOptions options = args.options;
  if (args.progress) options.progress = &std::cerr;
  SolveResult lo = solve(program, Sense::minimize, options);
  SolveResult hi = solve(program, Sense::maximize, options);
  auto t1 = std::chrono::steady_clock::now();

  if (lo.status == SolveStatus::infeasible || hi.status == SolveStatus::infeasible)
    throw Error("program is infeasible: the qualitative constraints admit no parameterization");

  QueryReport report;
  report.query = args.query;
  report.evidence = args.evidence;
  report.objective = objective;
  report.interval = {lo.bound, hi.bound};
  report.inner = {lo.incumbent, hi.incumbent};
  if (classify) {
    report.sign = classify_sign(lo.bound, hi.bound, args.eps);
    report.eps = args.eps;
  }
  report.gap = std::max(lo.gap, hi.gap);
  report.nodes = lo.nodes + hi.nodes;
  report.status = solve_status_name(lo.status == SolveStatus::converged &&
                                            hi.status == SolveStatus::converged
                                        ? SolveStatus::converged
                                        : SolveStatus::iteration_limit);
  report.gap_tol = options.gap_tol;
  report.max_nodes = options.max_nodes;
  report.seed = options.seed;
  if (args.timings)
    report.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  emit(write_report(report), args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-qualitative probabilistic networks: inference and learning"};
  app.require_subcommand(1);

  QueryArgs infer_args, sign_args;
  auto* infer_cmd = app.add_subcommand("infer", "certified bounds for a query");
  add_query_flags(infer_cmd, infer_args, false);
  auto* sign_cmd = app.add_subcommand("sign", "bounds plus sign classification");
  add_query_flags(sign_cmd, sign_args, true);

  std::string validate_net;
  auto* validate_cmd = app.add_subcommand("validate", "check a network document");
  validate_cmd->add_option("--net", validate_net)->required();

  struct LearnArgs {
    std::string net_path, data_path, out;
    double s = 2.0;
    std::uint64_t seed = 7;
  } ml_args, idm_args;
  auto* ml_cmd = app.add_subcommand("learn-ml", "constrained maximum likelihood estimates");
  ml_cmd->add_option("--net", ml_args.net_path)->required();
  ml_cmd->add_option("--data", ml_args.data_path)->required();
  ml_cmd->add_option("--seed", ml_args.seed);
  ml_cmd->add_option("--out", ml_args.out);
  auto* idm_cmd = app.add_subcommand("learn-idm", "credal estimates from constrained priors");
  idm_cmd->add_option("--net", idm_args.net_path)->required();
  idm_cmd->add_option("--data", idm_args.data_path)->required();
  idm_cmd->add_option("--s-p", idm_args.s, "dispersion hyperparameter");
  idm_cmd->add_option("--out", idm_args.out);

  struct OracleArgs {
    std::string net_path, data_path, query, evidence, formula, out;
    bool marginal = false, ml = false, emajsat = false;
    double grid = 0.02;
    int k = 1, threads = 1;
  } oracle_args;
  auto* oracle_cmd = app.add_subcommand("oracle", "brute-force ground truth for small instances");
  oracle_cmd->add_option("--net", oracle_args.net_path);
  oracle_cmd->add_option("--data", oracle_args.data_path);
  oracle_cmd->add_option("--query", oracle_args.query);
  oracle_cmd->add_option("--evidence", oracle_args.evidence);
  oracle_cmd->add_flag("--marginal", oracle_args.marginal);
  oracle_cmd->add_flag("--ml", oracle_args.ml);
  oracle_cmd->add_flag("--emajsat", oracle_args.emajsat);
  oracle_cmd->add_option("--formula", oracle_args.formula);
  oracle_cmd->add_option("--k", oracle_args.k);
  oracle_cmd->add_option("--grid", oracle_args.grid, "grid step");
  oracle_cmd->add_option("--threads", oracle_args.threads);
  oracle_cmd->add_option("--out", oracle_args.out);

  struct GadgetArgs {
    std::string formula, out;
    int k = 1;
    bool solve_it = false, check = false;
    double gap = 1e-7;
    std::uint64_t seed = 1;
  } gadget_args;
  auto* gadget_cmd = app.add_subcommand("gadget", "build (and solve) a decision-gadget network");
  gadget_cmd->add_option("--formula", gadget_args.formula)->required();
  gadget_cmd->add_option("--k", gadget_args.k)->required();
  gadget_cmd->add_flag("--solve", gadget_args.solve_it);
  gadget_cmd->add_flag("--oracle", gadget_args.check, "also run the brute-force check");
  gadget_cmd->add_option("--gap", gadget_args.gap);
  gadget_cmd->add_option("--seed", gadget_args.seed);
  gadget_cmd->add_option("--out", gadget_args.out, "write the gadget network document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*validate_cmd) {
      Network net;
      try {
        net = load_network_file(validate_net);
      } catch (const ValidationError& e) {
        std::cout << e.what() << "\n";
        return 1;
      }
      ValidationReport report = validate_network(net);
      if (!report.ok()) {
        std::cout << report.str();
        return 1;
      }
      std::cout << "ok\n";
      return 0;
    }
    if (*infer_cmd) return run_query(infer_args, false);
    if (*sign_cmd) return run_query(sign_args, true);

    if (*ml_cmd) {
      Network net = load_network_file(ml_args.net_path);
      Dataset data = load_dataset_file(ml_args.data_path, net);
      Counts counts = count_statistics(data, net);
      MlOptions options;
      options.seed = ml_args.seed;
      MlResult fit = fit_ml(net, counts, options);
      for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";

      Network learned = net;
      for (auto& spec : learned.nodes) {
        spec.relations.clear();
        spec.interval_rows.clear();
        spec.qualitative = false;
        for (const auto& [k, row] : fit.estimates[size_t(spec.variable)])
          spec.numeric_rows[k] = row;
      }
      ordered_json report;
      report["log_likelihood"] = fit.log_likelihood;
      report["warnings"] = fit.warnings;
      std::cout << report.dump(2) << "\n";
      emit(save_network(learned), ml_args.out);
      return 0;
    }

    if (*idm_cmd) {
      Network net = load_network_file(idm_args.net_path);
      Dataset data = load_dataset_file(idm_args.data_path, net);
      Counts counts = count_statistics(data, net);
      CredalNetwork credal = fit_idm(net, counts, IdmConfig{idm_args.s});
      ordered_json report;
      report["s_p"] = idm_args.s;
      ordered_json expressions = ordered_json::object();
      for (const auto& spec : credal.network.nodes) {
        if (!spec.is_idm()) continue;
        ordered_json per_node = ordered_json::object();
        for (const auto& [k, row] : spec.idm_rows) {
          (void)row;
          std::vector<int> values = credal.network.parent_config_values(spec.variable, k);
          std::string key;
          for (size_t m = 0; m < spec.parents.size(); ++m) {
            if (m) key += ",";
            key += credal.network.var(spec.parents[m])
                       .value_names[size_t(values[m])];
          }
          per_node[key] = idm_expressions(credal.network, spec.variable, k);
        }
        expressions[credal.network.var(spec.variable).name] = per_node;
      }
      report["expressions"] = expressions;
      std::cout << report.dump(2) << "\n";
      emit(save_network(credal.network), idm_args.out);
      return 0;
    }

    if (*oracle_cmd) {
      ordered_json report;
      if (oracle_args.emajsat) {
        BooleanFormula phi = parse_formula(oracle_args.formula);
        report["formula"] = oracle_args.formula;
        report["k"] = oracle_args.k;
        report["emajsat"] = emajsat_brute(phi, oracle_args.k);
      } else if (oracle_args.ml) {
        Network net = load_network_file(oracle_args.net_path);
        Dataset data = load_dataset_file(oracle_args.data_path, net);
        Counts counts = count_statistics(data, net);
        GridMlResult fit = grid_ml(net, counts, GridSpec{oracle_args.grid, 3,
                                                         oracle_args.threads});
        report["log_likelihood"] = fit.log_likelihood;
        ordered_json estimates = ordered_json::object();
        for (const auto& spec : net.nodes) {
          ordered_json rows = ordered_json::object();
          for (const auto& [k, row] : fit.estimates[size_t(spec.variable)]) {
            std::vector<int> values = net.parent_config_values(spec.variable, k);
            std::string key;
            for (size_t m = 0; m < spec.parents.size(); ++m) {
              if (m) key += ",";
              key += net.var(spec.parents[m]).value_names[size_t(values[m])];
            }
            rows[key] = std::vector<double>(row.data(), row.data() + row.size());
          }
          estimates[net.var(spec.variable).name] = rows;
        }
        report["estimates"] = estimates;
      } else {
        Network net = load_network_file(oracle_args.net_path);
        auto [qvar, qval] = parse_assignment(net, oracle_args.query);
        Evidence evidence = parse_evidence(net, oracle_args.evidence);
        Query query{qvar, qval, evidence};
        QueryKind kind = oracle_args.marginal
                             ? (evidence.empty() ? QueryKind::marginal : QueryKind::conditional)
                             : QueryKind::influence;
        Interval interval =
            grid_bounds(net, query, kind, GridSpec{oracle_args.grid, 3, oracle_args.threads});
        report["query"] = oracle_args.query;
        report["evidence"] = oracle_args.evidence;
        report["grid"] = oracle_args.grid;
        report["interval"] = std::vector<double>{interval.lo, interval.hi};
      }
      emit(report.dump(2) + "\n", oracle_args.out);
      return 0;
    }

    if (*gadget_cmd) {
      BooleanFormula phi = parse_formula(gadget_args.formula);
      auto [net, query] = build_emajsat_gadget(phi, gadget_args.k);
      if (!gadget_args.out.empty()) write_file(gadget_args.out, save_network(net));
      if (gadget_args.solve_it) {
        MultilinearProgram program = pose_influence_query(net, query);
        SolverOptions options;
        options.gap_tol = gadget_args.gap;
        options.seed = gadget_args.seed;
        SolveResult lo = solve(program, Sense::minimize, options);
        bool yes = lo.bound < -1e-6;
        std::cout << "EMAJSAT: " << (yes ? "yes" : "no") << "\n";
        ordered_json report;
        report["formula"] = gadget_args.formula;
        report["k"] = gadget_args.k;
        report["min_bound"] = lo.bound;
        report["min_incumbent"] = lo.incumbent;
        report["gap"] = lo.gap;
        report["nodes"] = lo.nodes;
        report["status"] = solve_status_name(lo.status);
        if (gadget_args.check) report["emajsat_brute"] = emajsat_brute(phi, gadget_args.k);
        std::cout << report.dump(2) << "\n";
      } else if (gadget_args.out.empty()) {
        std::cout << save_network(net);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
