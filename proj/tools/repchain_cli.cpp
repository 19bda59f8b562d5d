// repchain: batch front end for protocol evaluation and search.
//
//   repchain count       --config PATH | --nodes N  [--beta B]
//   repchain evaluate    --config PATH --protocol TEXT [--dump-dist PATH]
//   repchain brute-force --config PATH [--ledger PATH] [--summary PATH]
//   repchain optimize    --config PATH [--shots S] [--seed X]
//   repchain random      --config PATH [--shots S] [--seed X]
//   repchain oracle      --config PATH --protocol TEXT [--samples M]
//
// Exit codes: 0 success, 1 oracle mismatch or internal error, 2 validation or
// parse error, 3 truncation cap exceeded, 4 space too large to enumerate.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "repchain/config.hpp"
#include "repchain/evaluator.hpp"
#include "repchain/optimizer.hpp"
#include "repchain/protocol.hpp"

namespace {

using namespace repchain;

struct overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shots;
  std::optional<int> beta;
  std::optional<double> epsilon;
  std::optional<std::int64_t> t_cap;
  std::optional<std::string> units;
  std::optional<unsigned> threads;
  std::optional<std::string> dump_dist;
  std::optional<std::string> ledger;
  std::optional<std::string> summary;
  std::optional<std::string> table;
  std::optional<std::string> protocol;
  std::optional<std::string> protocol_file;
  std::optional<std::uint64_t> samples;
  std::optional<std::uint64_t> limit;
  std::optional<int> nodes;
};

run_config load(const overrides& o) {
  if (o.config.empty()) throw validation_error("--config is required");
  run_config cfg = load_config(o.config);
  auto& r = cfg.run;
  if (o.seed) r.seed = *o.seed;
  if (o.shots) r.shots = *o.shots;
  if (o.beta) r.beta = *o.beta;
  if (o.epsilon) r.epsilon = *o.epsilon;
  if (o.t_cap) r.t_cap = *o.t_cap;
  if (o.units) r.units = *o.units == "second" ? rate_units::per_second : rate_units::per_unit;
  if (o.threads) r.threads = *o.threads;
  if (o.samples) r.samples = *o.samples;
  if (o.limit) r.enumeration_limit = *o.limit;
  if (o.dump_dist) cfg.output.dump_dist = o.dump_dist;
  if (o.ledger) cfg.output.ledger = o.ledger;
  if (o.summary) cfg.output.summary = o.summary;
  if (o.table) cfg.output.table = o.table;
  r.validate();
  if (r.units == rate_units::per_second && !cfg.chain.t_unit_seconds)
    throw validation_error("--units second needs chain.L0_km or chain.t_unit_s in the config");
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

protocol_tree load_protocol(const overrides& o) {
  if (o.protocol && o.protocol_file)
    throw validation_error("give --protocol or --protocol-file, not both");
  std::string text;
  if (o.protocol) text = *o.protocol;
  else if (o.protocol_file) text = read_file(*o.protocol_file);
  else throw validation_error("--protocol or --protocol-file is required");
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return protocol_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw validation_error(std::string("protocol JSON: ") + e.what());
    }
  }
  return parse_protocol(text);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write " + path);
  return out;
}

double unit_scale(const run_config& cfg) {
  return cfg.run.units == rate_units::per_second ? 1.0 / *cfg.chain.t_unit_seconds : 1.0;
}

const char* unit_name(const run_config& cfg) {
  return cfg.run.units == rate_units::per_second ? "per second" : "per time unit";
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

int cmd_count(const overrides& o) {
  int n_nodes = 0, beta = 0;
  if (o.nodes) {
    if (!o.config.empty()) throw validation_error("give --config or --nodes, not both");
    n_nodes = *o.nodes;
    beta = o.beta.value_or(0);
  } else {
    const run_config cfg = load(o);
    n_nodes = static_cast<int>(cfg.chain.n_nodes());
    beta = cfg.run.beta;
  }
  if (n_nodes < 2) throw validation_error("count: need at least 2 nodes");
  if (beta < 0) throw validation_error("count: beta must be >= 0");
  const big_int shapes = catalan(n_nodes - 2);
  const int v = 2 * n_nodes - 3;
  const big_int labels = boost::multiprecision::pow(big_int(beta + 1), static_cast<unsigned>(v));
  const big_int total = count_space(n_nodes, beta);
  std::cout << "nodes " << n_nodes << ", beta " << beta << "\n"
            << "cardinality " << total << " (" << std::setprecision(3)
            << total.convert_to<double>() << ")\n"
            << "= C(" << n_nodes - 2 << ") x " << beta + 1 << "^" << v << " = " << shapes
            << " x " << labels << "\n";
  return 0;
}

int cmd_evaluate(const overrides& o) {
  const run_config cfg = load(o);
  const protocol_tree p = load_protocol(o);
  const protocol_evaluator ev(cfg.chain, cfg.run.eval());
  const auto res = ev.evaluate_full(p);
  nlohmann::json j = {{"protocol", serialize(p)}, {"metrics", to_json(res.m)}};
  j["skr"] = skr_of(res.m, cfg.run.units, cfg.chain);
  j["units"] = unit_name(cfg);
  std::cout << j.dump(2) << "\n";
  if (cfg.output.dump_dist) {
    auto out = open_out(*cfg.output.dump_dist);
    write_distribution_csv(out, res.distribution);
  }
  return 0;
}

void print_best(const run_config& cfg, const std::string& text, double objective) {
  std::cout << "best " << text << "\n"
            << "skr " << fmt(objective * unit_scale(cfg)) << " (" << unit_name(cfg) << ")\n";
}

int cmd_brute_force(const overrides& o) {
  const run_config cfg = load(o);
  evaluation_service svc(cfg.chain, cfg.run.eval(), cfg.run.cache_mb << 20);
  const auto res = brute_force(svc, cfg.run.beta, big_int(cfg.run.enumeration_limit),
                               cfg.run.threads);
  if (cfg.output.ledger) {
    auto out = open_out(*cfg.output.ledger);
    write_brute_force_table(out, res);
  }
  if (cfg.output.summary) {
    auto out = open_out(*cfg.output.summary);
    out << "index,protocol,skr,best_so_far\n";
    double best = 0.0;
    const double scale = unit_scale(cfg);
    for (std::size_t i = 0; i < res.table.size(); ++i) {
      best = std::max(best, res.table[i].objective);
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", res.table[i].objective * scale,
                    best * scale);
      out << i << ",\"" << res.table[i].protocol_text << '"' << buf;
    }
  }
  std::cout << "protocols " << res.table.size() << "\n";
  print_best(cfg, res.best.protocol_text, res.best.objective);
  std::cout << "index " << res.best_index << "\n";
  return 0;
}

int cmd_search(const overrides& o, bool use_bo) {
  const run_config cfg = load(o);
  if (cfg.run.shots < 1) throw validation_error("shots must be >= 1");
  evaluation_service svc(cfg.chain, cfg.run.eval(), cfg.run.cache_mb << 20);
  const auto opts = cfg.run.search();
  const search_result res = use_bo ? bayesian_optimize(svc, cfg.run.beta, opts)
                                   : random_search(svc, cfg.run.beta, opts);
  if (cfg.output.ledger) {
    auto out = open_out(*cfg.output.ledger);
    write_ledger(out, res.history);
  }
  if (cfg.output.summary) {
    auto out = open_out(*cfg.output.summary);
    write_summary(out, res.history, unit_scale(cfg));
  }
  print_best(cfg, res.best.protocol_text, res.best.objective);
  std::cout << "trial " << res.best.trial_index << " of " << res.history.size() << "\n";
  return 0;
}

// The analytic side runs at a tail mass far below the Monte Carlo resolution
// unless --epsilon is given explicitly.
int cmd_oracle(const overrides& o) {
  run_config cfg = load(o);
  if (!o.epsilon) cfg.run.epsilon = 1e-10;
  if (o.samples && *o.samples == 0) throw validation_error("--samples must be >= 1");
  if (cfg.run.samples < 1) throw validation_error("samples must be >= 1");
  const protocol_tree p = load_protocol(o);
  const metrics m = evaluate(p, cfg.chain, cfg.run.eval());
  const auto mc = monte_carlo(p, cfg.chain, cfg.run.samples, cfg.run.seed);
  const bool ok_t = within_standard_errors(m.mean_time, mc.mean_time, mc.se_time);
  const bool ok_w = within_standard_errors(m.mean_werner, mc.mean_werner, mc.se_werner);
  std::cout << "protocol " << serialize(p) << "\n"
            << "samples " << mc.n_samples << "\n"
            << "mean_time analytic " << fmt(m.mean_time) << " monte_carlo " << fmt(mc.mean_time)
            << " se " << fmt(mc.se_time) << (ok_t ? " PASS" : " FAIL") << "\n"
            << "mean_werner analytic " << fmt(m.mean_werner) << " monte_carlo "
            << fmt(mc.mean_werner) << " se " << fmt(mc.se_werner) << (ok_w ? " PASS" : " FAIL")
            << "\n"
            << (ok_t && ok_w ? "PASS" : "FAIL") << " at 4 standard errors\n";
  return ok_t && ok_w ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entanglement distribution protocols for quantum repeater chains"};
  app.require_subcommand(1);
  overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)");
    sub->add_option("--beta", o.beta, "Maximum distillation rounds per vertex")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--epsilon", o.epsilon, "Untracked tail mass of the time distribution");
    sub->add_option("--t-cap", o.t_cap, "Largest truncation horizon")
        ->check(CLI::PositiveNumber);
    sub->add_option("--units", o.units, "Rate units")->check(CLI::IsMember({"unit", "second"}));
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Base random seed");
  };
  auto outputs = [&](CLI::App* sub) {
    sub->add_option("--ledger", o.ledger, "JSON-lines trial ledger");
    sub->add_option("--summary", o.summary, "CSV summary");
  };
  auto protocol = [&](CLI::App* sub) {
    sub->add_option("--protocol", o.protocol, "Protocol text, e.g. ((L0:1)(L1:1):0), or JSON");
    sub->add_option("--protocol-file", o.protocol_file, "File holding protocol text or JSON");
  };

  auto* count = app.add_subcommand("count", "Size of the protocol space");
  common(count);
  count->add_option("--nodes", o.nodes, "Number of nodes (instead of --config)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate one protocol");
  common(evaluate_cmd);
  protocol(evaluate_cmd);
  evaluate_cmd->add_option("--dump-dist", o.dump_dist, "CSV of t, p, v for the root");

  auto* brute = app.add_subcommand("brute-force", "Evaluate every protocol");
  common(brute);
  outputs(brute);
  brute->add_option("--limit", o.limit, "Largest space to enumerate");

  auto* optimize = app.add_subcommand("optimize", "Bayesian optimisation");
  common(optimize);
  outputs(optimize);
  optimize->add_option("--shots", o.shots, "Number of evaluations");

  auto* random = app.add_subcommand("random", "Uniform random search");
  common(random);
  outputs(random);
  random->add_option("--shots", o.shots, "Number of evaluations");

  auto* oracle = app.add_subcommand("oracle", "Compare against Monte Carlo");
  common(oracle);
  protocol(oracle);
  oracle->add_option("--samples", o.samples, "Monte Carlo samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*count) return cmd_count(o);
    if (*evaluate_cmd) return cmd_evaluate(o);
    if (*brute) return cmd_brute_force(o);
    if (*optimize) return cmd_search(o, true);
    if (*random) return cmd_search(o, false);
    if (*oracle) return cmd_oracle(o);
  } catch (const truncation_cap_exceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const space_too_large& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
