#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "repchain/bayesopt.hpp"
#include "repchain/encoder.hpp"
#include "repchain/errors.hpp"
#include "repchain/evaluator.hpp"
#include "repchain/protocol.hpp"

namespace repchain {

/// Bounds of (gamma, K, eta, tau) for an (N, beta) target.
struct search_space {
  int n_nodes = 2;
  int beta = 0;

  int n_vertices() const noexcept { return 2 * n_nodes - 3; }
  int k_max() const noexcept { return n_vertices() * beta; }

  /// Unit-cube point -> params, K relaxed to [0, k_max] and rounded.
  encoder_params decode(const bo::point& x) const {
    encoder_params p;
    p.gamma = std::clamp(x.at(0), 0.0, 1.0);
    p.K = static_cast<int>(std::lround(std::clamp(x.at(1), 0.0, 1.0) * k_max()));
    p.eta = std::clamp(2.0 * x.at(2) - 1.0, -1.0, 1.0);
    p.tau = std::clamp(x.at(3), 0.0, 1.0);
    return p;
  }
};

enum class trial_status { ok, truncation_cap_exceeded };

struct trial_record {
  std::size_t trial_index = 0;
  encoder_params params;
  std::string protocol_text;
  std::optional<metrics> result;  // empty for failed evaluations
  double objective = 0.0;         // SKR; 0 for failed evaluations
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  trial_status status = trial_status::ok;
};

struct search_result {
  trial_record best;
  std::vector<trial_record> history;
};

/// Memoized protocol evaluation, shared between searches on the same chain
/// and options. Thread-safe.
class evaluation_service {
public:
  evaluation_service(const hardware_chain& chain, eval_options opts = {},
                     std::size_t cache_bytes = std::size_t{1} << 30)
      : dist_cache_(cache_bytes), evaluator_(chain, opts, &dist_cache_) {}

  const hardware_chain& chain() const noexcept { return evaluator_.chain(); }

  struct outcome {
    std::optional<metrics> m;
    double objective = 0.0;
    trial_status status = trial_status::ok;
  };

  outcome evaluate(const protocol_tree& p) {
    const std::string key = serialize(p);
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    outcome o;
    try {
      o.m = evaluator_.evaluate(p);
      o.objective = o.m->skr;
    } catch (const truncation_cap_exceeded&) {
      o.status = trial_status::truncation_cap_exceeded;
    }
    std::lock_guard lock(mutex_);
    memo_.emplace(key, o);
    return o;
  }

  std::size_t evaluations() const {
    std::lock_guard lock(mutex_);
    return memo_.size();
  }

private:
  distribution_cache dist_cache_;
  protocol_evaluator evaluator_;
  mutable std::mutex mutex_;
  std::map<std::string, outcome> memo_;
};

namespace detail {

inline trial_record run_trial(evaluation_service& svc, const search_space& space,
                              const encoder_params& params, std::size_t index,
                              std::uint64_t base_seed) {
  const auto start = std::chrono::steady_clock::now();
  trial_record r;
  r.trial_index = index;
  r.params = params;
  r.seed = base_seed + index;
  std::mt19937_64 rng(r.seed);
  const protocol_tree p = encode(params, space.n_nodes, space.beta, rng);
  r.protocol_text = serialize(p);
  const auto o = svc.evaluate(p);
  r.result = o.m;
  r.objective = o.objective;
  r.status = o.status;
  r.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// Highest objective, earliest index on ties.
inline std::size_t argmax(const std::vector<trial_record>& h) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < h.size(); ++i)
    if (h[i].objective > h[best].objective) best = i;
  return best;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

struct search_options {
  std::size_t shots = 100;
  std::uint64_t seed = 0;
  bo::bo_config bo{};
  unsigned threads = 1;
};

/// Gaussian-process search over (gamma, K, eta, tau). Trial i decodes its
/// point with the encoder seeded by seed + i.
inline search_result bayesian_optimize(evaluation_service& svc, int beta,
                                       const search_options& opts) {
  if (opts.bo.n_init < 2) throw validation_error("bayesian_optimize: n_init must be >= 2");
  if (opts.shots < opts.bo.n_init)
    throw validation_error("bayesian_optimize: shots (" + std::to_string(opts.shots) +
                           ") must be >= n_init (" + std::to_string(opts.bo.n_init) + ")");
  const search_space space{static_cast<int>(svc.chain().n_nodes()), beta};
  bo::bayes_optimizer opt(4, opts.seed, opts.bo);
  search_result res;

  // The initial design does not depend on any observation.
  const std::vector<bo::point> design = opt.initial_design();
  res.history.resize(design.size());
  detail::parallel_for(design.size(), opts.threads, [&](std::size_t i) {
    res.history[i] = detail::run_trial(svc, space, space.decode(design[i]), i, opts.seed);
  });
  for (std::size_t i = 0; i < design.size(); ++i) opt.tell(design[i], res.history[i].objective);

  for (std::size_t i = design.size(); i < opts.shots; ++i) {
    const bo::point x = opt.ask();
    res.history.push_back(detail::run_trial(svc, space, space.decode(x), i, opts.seed));
    opt.tell(x, res.history.back().objective);
  }
  res.best = res.history[detail::argmax(res.history)];
  return res;
}

/// Uniform draws over the search space (K uniform over its integers).
inline search_result random_search(evaluation_service& svc, int beta,
                                   const search_options& opts) {
  if (opts.shots < 1) throw validation_error("random_search: shots must be >= 1");
  const search_space space{static_cast<int>(svc.chain().n_nodes()), beta};
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> k(0, space.k_max());
  std::vector<encoder_params> draws(opts.shots);
  for (auto& p : draws) {
    p.gamma = u(rng);
    p.K = k(rng);
    p.eta = 2.0 * u(rng) - 1.0;
    p.tau = u(rng);
  }
  search_result res;
  res.history.resize(opts.shots);
  detail::parallel_for(opts.shots, opts.threads, [&](std::size_t i) {
    res.history[i] = detail::run_trial(svc, space, draws[i], i, opts.seed);
  });
  res.best = res.history[detail::argmax(res.history)];
  return res;
}

struct brute_force_entry {
  std::string protocol_text;
  std::optional<metrics> result;
  double objective = 0.0;
  trial_status status = trial_status::ok;
};

struct brute_force_result {
  std::size_t best_index = 0;
  brute_force_entry best;
  std::vector<brute_force_entry> table;  // protocol_space order
};

/// Evaluates every protocol of the (N, beta) space; argmax ties go to the
/// earliest protocol in enumeration order.
inline brute_force_result brute_force(evaluation_service& svc, int beta,
                                      const big_int& enumeration_limit,
                                      unsigned threads = 1) {
  const int n_nodes = static_cast<int>(svc.chain().n_nodes());
  const big_int card = count_space(n_nodes, beta);
  if (card > enumeration_limit) throw space_too_large(card.str(), enumeration_limit.str());
  protocol_space space(n_nodes, beta);
  brute_force_result res;
  res.table.resize(static_cast<std::size_t>(space.size()));
  detail::parallel_for(res.table.size(), threads, [&](std::size_t i) {
    const auto p = space.at(i);
    const auto o = svc.evaluate(p);
    res.table[i] = {serialize(p), o.m, o.objective, o.status};
  });
  for (std::size_t i = 1; i < res.table.size(); ++i)
    if (res.table[i].objective > res.table[res.best_index].objective) res.best_index = i;
  res.best = res.table[res.best_index];
  return res;
}

// ---------------------------------------------------------------------------
// Ledger output

inline std::string to_string(trial_status s) {
  return s == trial_status::ok ? "ok" : "truncation_cap_exceeded";
}

inline nlohmann::json to_json(const encoder_params& p) {
  return {{"gamma", p.gamma}, {"K", p.K}, {"eta", p.eta}, {"tau", p.tau}};
}

/// One ledger line. wall_time is excluded unless requested so that identical
/// runs produce identical bytes.
inline nlohmann::json to_json(const trial_record& r, bool with_wall_time = false) {
  nlohmann::json j = {{"trial_index", r.trial_index},
                      {"params", to_json(r.params)},
                      {"protocol", r.protocol_text},
                      {"objective", r.objective},
                      {"seed", r.seed},
                      {"status", to_string(r.status)}};
  j["metrics"] = r.result ? to_json(*r.result) : nlohmann::json(nullptr);
  if (with_wall_time) j["wall_time"] = r.wall_time;
  return j;
}

inline void write_ledger(std::ostream& os, const std::vector<trial_record>& history,
                         bool with_wall_time = false) {
  for (const auto& r : history) os << to_json(r, with_wall_time).dump() << '\n';
}

/// CSV: trial_index,gamma,K,eta,tau,skr,best_so_far. `scale` converts the
/// per-time-unit objective, e.g. to per second.
inline void write_summary(std::ostream& os, const std::vector<trial_record>& history,
                          double scale = 1.0) {
  os << "trial_index,gamma,K,eta,tau,skr,best_so_far\n";
  double best = 0.0;
  char buf[256];
  for (const auto& r : history) {
    best = std::max(best, r.objective);
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", r.trial_index,
                  r.params.gamma, r.params.K, r.params.eta, r.params.tau, r.objective * scale,
                  best * scale);
    os << buf;
  }
}

inline void write_brute_force_table(std::ostream& os, const brute_force_result& res) {
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    const auto& e = res.table[i];
    nlohmann::json j = {{"index", i},
                        {"protocol", e.protocol_text},
                        {"objective", e.objective},
                        {"status", to_string(e.status)}};
    j["metrics"] = e.result ? to_json(*e.result) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
}

}  // namespace repchain
