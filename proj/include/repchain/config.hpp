#pragma once

// Run configuration files (JSON). Every physical quantity carries its unit in
// the key name: *_tu is in simulation time units (L0 / c), *_km kilometres,
// *_m_per_s metres per second, *_s seconds. Unknown keys are rejected.
//
// {
//   "chain": {
//     "coherence_mode": "per-node" | "per-link-joint",
//     "p_swap": 0.85,
//     "nodes": [{"t_coh_tu": 1.08e6}, ...],
//     "links": [{"p_gen": 0.2588, "w0": 0.9577, "t_coh_tu": ...}, ...],
//     -- or instead of nodes/links --
//     "homogeneous": {"n_nodes": 5, "p_gen": 9.2e-4, "w0": 0.952, "t_coh_tu": 1.4e6},
//     "L0_km": 50, "c_m_per_s": 2e8      (or "t_unit_s")
//   },
//   "run": {"beta": 1, "shots": 100, "n_init": 10, "seed": 0, "epsilon": 0.01,
//           "t_init": 64, "t_cap": 4194304, "units": "unit" | "second",
//           "enumeration_limit": 100000, "threads": 1, "candidates": 1024,
//           "xi": 0.01, "backend": "doubling" | "renewal", "samples": 1000000,
//           "cache_mb": 1024},
//   "output": {"ledger": "...", "summary": "...", "dump_dist": "...",
//              "table": "..."}
// }
//
// Coherence times may be given as the string "inf".

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "repchain/chain.hpp"
#include "repchain/errors.hpp"
#include "repchain/evaluator.hpp"
#include "repchain/optimizer.hpp"

namespace repchain {

inline constexpr double default_light_speed_m_per_s = 2.0e8;

struct run_params {
  int beta = 0;
  std::size_t shots = 100;
  std::size_t n_init = 10;
  std::uint64_t seed = 0;
  double epsilon = 0.01;
  std::int64_t t_init = 64;
  std::int64_t t_cap = std::int64_t{1} << 22;
  rate_units units = rate_units::per_unit;
  std::uint64_t enumeration_limit = 100000;
  unsigned threads = 1;
  std::size_t candidates = 1024;
  double xi = 0.01;
  compound_backend backend = compound_backend::doubling;
  std::uint64_t samples = 1000000;
  std::size_t cache_mb = 1024;

  eval_options eval() const {
    eval_options o;
    o.coverage.epsilon = epsilon;
    o.coverage.t_init = t_init;
    o.coverage.t_cap = t_cap;
    o.backend = backend;
    return o;
  }

  search_options search() const {
    search_options s;
    s.shots = shots;
    s.seed = seed;
    s.threads = threads;
    s.bo.n_init = n_init;
    s.bo.candidates = candidates;
    s.bo.xi = xi;
    return s;
  }

  void validate() const {
    if (beta < 0) throw validation_error("run.beta must be >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw validation_error("run.epsilon must be in (0, 1)");
    if (t_init < 1) throw validation_error("run.t_init must be >= 1");
    if (t_cap < t_init) throw validation_error("run.t_cap must be >= run.t_init");
    if (threads < 1) throw validation_error("run.threads must be >= 1");
    if (candidates < 1) throw validation_error("run.candidates must be >= 1");
  }
};

struct output_paths {
  std::optional<std::string> ledger;
  std::optional<std::string> summary;
  std::optional<std::string> dump_dist;
  std::optional<std::string> table;
};

struct run_config {
  hardware_chain chain;
  run_params run;
  output_paths output;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) throw validation_error(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw validation_error("unknown key '" + key + "' in " + where);
}

inline double number(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw validation_error(where + "." + key + " is required");
  const auto& v = j.at(key);
  if (!v.is_number()) throw validation_error(where + "." + key + " must be a number");
  return v.get<double>();
}

inline double coherence(const nlohmann::json& j, const std::string& key,
                        const std::string& where) {
  if (!j.contains(key)) return kernels::infinity;
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kernels::infinity;
    throw validation_error(where + "." + key + " must be a number or \"inf\"");
  }
  return number(j, key, where);
}

template <class T>
T integer(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw validation_error(where + "." + key + " must be an integer");
  const auto x = v.get<long long>();
  if (x < 0) throw validation_error(where + "." + key + " must be non-negative");
  return static_cast<T>(x);
}

inline hardware_chain parse_chain(const nlohmann::json& j) {
  reject_unknown(j, {"coherence_mode", "p_swap", "nodes", "links", "homogeneous", "L0_km",
                     "c_m_per_s", "t_unit_s"},
                 "chain");
  coherence_mode mode = coherence_mode::per_node;
  if (j.contains("coherence_mode")) {
    const auto m = j.at("coherence_mode").get<std::string>();
    if (m == "per-node") mode = coherence_mode::per_node;
    else if (m == "per-link-joint") mode = coherence_mode::per_link_joint;
    else throw validation_error("chain.coherence_mode must be 'per-node' or 'per-link-joint'");
  }
  const double p_swap = number(j, "p_swap", "chain");

  hardware_chain c;
  if (j.contains("homogeneous")) {
    if (j.contains("nodes") || j.contains("links"))
      throw validation_error("chain: give either 'homogeneous' or 'nodes'/'links', not both");
    const auto& h = j.at("homogeneous");
    reject_unknown(h, {"n_nodes", "p_gen", "w0", "t_coh_tu"}, "chain.homogeneous");
    c = hardware_chain::homogeneous(integer<std::size_t>(h, "n_nodes", "chain.homogeneous"),
                                    number(h, "p_gen", "chain.homogeneous"),
                                    number(h, "w0", "chain.homogeneous"),
                                    coherence(h, "t_coh_tu", "chain.homogeneous"), p_swap, mode);
  } else {
    if (!j.contains("nodes") || !j.contains("links"))
      throw validation_error("chain needs 'nodes' and 'links' (or 'homogeneous')");
    c.mode = mode;
    c.p_swap = p_swap;
    for (const auto& n : j.at("nodes")) {
      reject_unknown(n, {"t_coh_tu"}, "chain.nodes[]");
      c.nodes.push_back({coherence(n, "t_coh_tu", "chain.nodes[]")});
    }
    for (const auto& l : j.at("links")) {
      reject_unknown(l, {"p_gen", "w0", "t_coh_tu"}, "chain.links[]");
      c.links.push_back({number(l, "p_gen", "chain.links[]"), number(l, "w0", "chain.links[]"),
                         coherence(l, "t_coh_tu", "chain.links[]")});
    }
  }
  if (j.contains("t_unit_s")) {
    if (j.contains("L0_km")) throw validation_error("chain: give 'L0_km' or 't_unit_s', not both");
    c.t_unit_seconds = number(j, "t_unit_s", "chain");
  } else if (j.contains("L0_km")) {
    const double c_light = j.contains("c_m_per_s") ? number(j, "c_m_per_s", "chain")
                                                   : default_light_speed_m_per_s;
    if (!(c_light > 0.0)) throw validation_error("chain.c_m_per_s must be positive");
    c.t_unit_seconds = number(j, "L0_km", "chain") * 1e3 / c_light;
  } else if (j.contains("c_m_per_s")) {
    throw validation_error("chain.c_m_per_s given without chain.L0_km");
  }
  c.validate();
  return c;
}

inline run_params parse_run(const nlohmann::json& j) {
  reject_unknown(j, {"beta", "shots", "n_init", "seed", "epsilon", "t_init", "t_cap", "units",
                     "enumeration_limit", "threads", "candidates", "xi", "backend", "samples",
                     "cache_mb"},
                 "run");
  run_params r;
  if (j.contains("beta")) r.beta = integer<int>(j, "beta", "run");
  if (j.contains("shots")) r.shots = integer<std::size_t>(j, "shots", "run");
  if (j.contains("n_init")) r.n_init = integer<std::size_t>(j, "n_init", "run");
  if (j.contains("seed")) r.seed = integer<std::uint64_t>(j, "seed", "run");
  if (j.contains("epsilon")) r.epsilon = number(j, "epsilon", "run");
  if (j.contains("t_init")) r.t_init = integer<std::int64_t>(j, "t_init", "run");
  if (j.contains("t_cap")) r.t_cap = integer<std::int64_t>(j, "t_cap", "run");
  if (j.contains("units")) {
    const auto u = j.at("units").get<std::string>();
    if (u == "unit") r.units = rate_units::per_unit;
    else if (u == "second") r.units = rate_units::per_second;
    else throw validation_error("run.units must be 'unit' or 'second'");
  }
  if (j.contains("enumeration_limit"))
    r.enumeration_limit = integer<std::uint64_t>(j, "enumeration_limit", "run");
  if (j.contains("threads")) r.threads = integer<unsigned>(j, "threads", "run");
  if (j.contains("candidates")) r.candidates = integer<std::size_t>(j, "candidates", "run");
  if (j.contains("xi")) r.xi = number(j, "xi", "run");
  if (j.contains("backend")) {
    const auto b = j.at("backend").get<std::string>();
    if (b == "doubling") r.backend = compound_backend::doubling;
    else if (b == "renewal") r.backend = compound_backend::renewal;
    else throw validation_error("run.backend must be 'doubling' or 'renewal'");
  }
  if (j.contains("samples")) r.samples = integer<std::uint64_t>(j, "samples", "run");
  if (j.contains("cache_mb")) r.cache_mb = integer<std::size_t>(j, "cache_mb", "run");
  return r;
}

inline output_paths parse_output(const nlohmann::json& j) {
  reject_unknown(j, {"ledger", "summary", "dump_dist", "table"}, "output");
  output_paths o;
  auto get = [&](const char* k, std::optional<std::string>& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::string>();
  };
  get("ledger", o.ledger);
  get("summary", o.summary);
  get("dump_dist", o.dump_dist);
  get("table", o.table);
  return o;
}

}  // namespace detail

inline run_config parse_config(const nlohmann::json& j) {
  try {
    detail::reject_unknown(j, {"chain", "run", "output"}, "config");
    if (!j.contains("chain")) throw validation_error("config needs a 'chain' section");
    run_config cfg;
    cfg.chain = detail::parse_chain(j.at("chain"));
    if (j.contains("run")) cfg.run = detail::parse_run(j.at("run"));
    if (j.contains("output")) cfg.output = detail::parse_output(j.at("output"));
    cfg.run.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("config: ") + e.what());
  }
}

inline run_config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error("config " + path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace repchain
