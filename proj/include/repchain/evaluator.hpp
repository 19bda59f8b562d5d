#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "repchain/chain.hpp"
#include "repchain/errors.hpp"
#include "repchain/kernels.hpp"
#include "repchain/protocol.hpp"
#include "repchain/time_distribution.hpp"

namespace repchain {

enum class rate_units { per_unit, per_second };

struct metrics {
  double mean_time = 0.0;  // time units
  double mean_werner = 0.0;
  double secret_fraction = 0.0;
  double skr = 0.0;  // per time unit
  double coverage = 0.0;
  std::int64_t t_trunc_used = 0;
  std::optional<double> mean_time_seconds;
  std::optional<double> skr_per_second;
};

inline nlohmann::json to_json(const metrics& m) {
  nlohmann::json j = {{"mean_time", m.mean_time},
                      {"mean_werner", m.mean_werner},
                      {"secret_fraction", m.secret_fraction},
                      {"skr", m.skr},
                      {"coverage", m.coverage},
                      {"t_trunc_used", m.t_trunc_used}};
  if (m.mean_time_seconds) j["mean_time_seconds"] = *m.mean_time_seconds;
  if (m.skr_per_second) j["skr_per_second"] = *m.skr_per_second;
  return j;
}

/// secret_fraction / mean_time, optionally per second.
inline double skr_of(const metrics& m, rate_units units, const hardware_chain& chain) {
  if (!(m.mean_time > 0.0)) throw validation_error("skr_of: mean_time must be positive");
  const double per_unit = m.secret_fraction / m.mean_time;
  if (units == rate_units::per_unit) return per_unit;
  if (!chain.t_unit_seconds)
    throw validation_error("per-second SKR requested but the chain has no time unit "
                           "in seconds (set L0 and c)");
  return per_unit / *chain.t_unit_seconds;
}

/// Built subtree distributions keyed by (subtree text, horizon). Safe to share
/// between threads; entries are evicted oldest-first past the byte budget.
class distribution_cache {
public:
  explicit distribution_cache(std::size_t byte_budget = std::size_t{1} << 30)
      : budget_(byte_budget) {}

  using key_type = std::pair<std::string, std::int64_t>;

  std::shared_ptr<const time_distribution> find(const key_type& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    ++hits_;
    return it->second;
  }

  void insert(const key_type& key, std::shared_ptr<const time_distribution> d) {
    std::lock_guard lock(mutex_);
    if (entries_.count(key)) return;
    bytes_ += d->bytes();
    entries_.emplace(key, std::move(d));
    order_.push_back(key);
    while (bytes_ > budget_ && order_.size() > 1) {
      auto it = entries_.find(order_.front());
      bytes_ -= it->second->bytes();
      entries_.erase(it);
      order_.pop_front();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }

private:
  mutable std::mutex mutex_;
  std::map<key_type, std::shared_ptr<const time_distribution>> entries_;
  std::deque<key_type> order_;
  std::size_t budget_;
  std::size_t bytes_ = 0;
  mutable std::size_t hits_ = 0;
};

struct eval_options {
  coverage_policy coverage{};
  compound_backend backend = compound_backend::doubling;
  /// Skip horizons at which the slowest elementary link alone cannot reach
  /// the coverage target. Never changes the horizon finally used.
  bool skip_infeasible_horizons = true;
};

class protocol_evaluator {
public:
  protocol_evaluator(const hardware_chain& chain, eval_options opts = {},
                     distribution_cache* cache = nullptr)
      : chain_(chain), opts_(opts), cache_(cache) {
    chain_.validate();
  }

  const hardware_chain& chain() const noexcept { return chain_; }
  const eval_options& options() const noexcept { return opts_; }

  /// Root distribution at a fixed horizon.
  time_distribution build(const protocol_tree& p, std::int64_t t_trunc) const {
    p.validate(chain_.n_links());
    return *build_at(p, p.root_index(), t_trunc);
  }

  /// Distribution of every vertex's output link (after its distillation
  /// rounds), indexed like p.vertices().
  std::vector<time_distribution> vertex_distributions(const protocol_tree& p,
                                                      std::int64_t t_trunc) const {
    p.validate(chain_.n_links());
    std::vector<time_distribution> out;
    for (int i = 0; i <= p.root_index(); ++i) out.push_back(*build_at(p, i, t_trunc));
    return out;
  }

  /// Smallest horizon tried by ensure_coverage.
  std::int64_t initial_horizon(const protocol_tree& p) const {
    std::int64_t t = opts_.coverage.t_init;
    if (!opts_.skip_infeasible_horizons) return t;
    double min_p = 1.0;
    for (int l = p.root().first_link; l <= p.root().last_link; ++l)
      min_p = std::min(min_p, chain_.links[static_cast<std::size_t>(l)].p_gen);
    if (min_p >= 1.0) return t;
    // Pr[leaf ready by t] = 1 - (1 - p)^t, and the root is never earlier.
    const double needed = std::log(opts_.coverage.epsilon) / std::log1p(-min_p);
    while (static_cast<double>(t) < needed - 1e-9 && t <= opts_.coverage.t_cap / 2)
      t *= 2;
    return t;
  }

  struct result {
    metrics m;
    time_distribution distribution;
  };

  result evaluate_full(const protocol_tree& p) const {
    p.validate(chain_.n_links());
    coverage_policy policy = opts_.coverage;
    policy.t_init = std::min(initial_horizon(p), policy.t_cap);
    auto d = ensure_coverage(
        [&](std::int64_t t) { return *build_at(p, p.root_index(), t); }, policy);
    const auto s = summarize(d);
    metrics m;
    m.mean_time = s.mean_time;
    m.mean_werner = s.mean_werner;
    m.coverage = s.coverage;
    m.t_trunc_used = d.t_trunc();
    m.secret_fraction = kernels::secret_fraction(s.mean_werner);
    m.skr = skr_of(m, rate_units::per_unit, chain_);
    if (chain_.t_unit_seconds) {
      m.mean_time_seconds = m.mean_time * *chain_.t_unit_seconds;
      m.skr_per_second = skr_of(m, rate_units::per_second, chain_);
    }
    return {m, std::move(d)};
  }

  metrics evaluate(const protocol_tree& p) const { return evaluate_full(p).m; }

private:
  static std::string subtree_text(const protocol_tree& p, int i) {
    std::string s;
    detail::serialize_at(p, i, s);
    return s;
  }

  std::shared_ptr<const time_distribution> build_at(const protocol_tree& p, int i,
                                                    std::int64_t t) const {
    std::string key;
    if (cache_) {
      key = subtree_text(p, i);
      if (auto hit = cache_->find({key, t})) return hit;
    }
    const auto& v = p.at(i);
    const link_endpoints ends{static_cast<std::size_t>(v.first_link),
                              static_cast<std::size_t>(v.last_link) + 1};
    time_distribution d;
    if (v.is_leaf()) {
      const auto& l = chain_.links[static_cast<std::size_t>(v.link)];
      d = geometric_generation(l.p_gen, l.w0, t);
    } else {
      const auto left = build_at(p, v.left, t);
      const auto right = build_at(p, v.right, t);
      const auto& lv = p.at(v.left);
      const auto& rv = p.at(v.right);
      d = merge(*left,
                {static_cast<std::size_t>(lv.first_link),
                 static_cast<std::size_t>(lv.last_link) + 1},
                *right,
                {static_cast<std::size_t>(rv.first_link),
                 static_cast<std::size_t>(rv.last_link) + 1},
                merge_op::swap, chain_, opts_.backend);
    }
    // Round r distills two independent copies of the round r-1 link.
    for (int r = 0; r < v.rounds; ++r)
      d = merge(d, ends, d, ends, merge_op::distill, chain_, opts_.backend);
    auto out = std::make_shared<const time_distribution>(std::move(d));
    if (cache_) cache_->insert({key, t}, out);
    return out;
  }

  hardware_chain chain_;
  eval_options opts_;
  distribution_cache* cache_;
};

inline metrics evaluate(const protocol_tree& p, const hardware_chain& chain,
                        const eval_options& opts = {}) {
  return protocol_evaluator(chain, opts).evaluate(p);
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle: samples the stochastic process itself.

struct monte_carlo_estimate {
  std::uint64_t n_samples = 0;
  double mean_time = 0.0;
  double se_time = 0.0;
  double mean_werner = 0.0;
  double se_werner = 0.0;
};

namespace detail {

class process_sampler {
public:
  process_sampler(const protocol_tree& p, const hardware_chain& chain,
                  std::uint64_t seed)
      : p_(p), chain_(chain), rng_(seed) {
    // p_gen = 1 is sampled directly; the placeholder keeps the distribution valid.
    for (const auto& l : chain.links) gen_.emplace_back(l.p_gen < 1.0 ? l.p_gen : 0.5);
    for (const auto& v : p.vertices()) {
      rates_.push_back(chain.decay_rate({static_cast<std::size_t>(v.first_link),
                                         static_cast<std::size_t>(v.last_link) + 1}));
    }
  }

  struct sample {
    double t;
    double w;
  };

  sample draw() { return rounds(p_.root_index(), p_.at(p_.root_index()).rounds); }

private:
  sample rounds(int i, int r) {
    if (r == 0) return base(i);
    double elapsed = 0.0;
    for (;;) {
      const sample a = rounds(i, r - 1);
      const sample b = rounds(i, r - 1);
      const auto [wa, wb, tau] = aligned(a, i, b, i);
      const double ps = kernels::dist_success(wa, wb);
      if (unit_(rng_) < ps) return {elapsed + tau, kernels::dist_output(wa, wb)};
      elapsed += tau;
    }
  }

  sample base(int i) {
    const auto& v = p_.at(i);
    if (v.is_leaf()) {
      const auto l = static_cast<std::size_t>(v.link);
      // std::geometric_distribution requires p < 1.
      const double t =
          chain_.links[l].p_gen >= 1.0 ? 1.0 : static_cast<double>(gen_[l](rng_) + 1);
      return {t, chain_.links[l].w0};
    }
    double elapsed = 0.0;
    for (;;) {
      const sample a = rounds(v.left, p_.at(v.left).rounds);
      const sample b = rounds(v.right, p_.at(v.right).rounds);
      const auto [wa, wb, tau] = aligned(a, v.left, b, v.right);
      if (unit_(rng_) < chain_.p_swap) return {elapsed + tau, kernels::swap_output(wa, wb)};
      elapsed += tau;
    }
  }

  // The earlier link waits for the later one in its own memories.
  std::tuple<double, double, double> aligned(const sample& a, int ia, const sample& b,
                                             int ib) const {
    const double tau = std::max(a.t, b.t);
    const double wa = a.w * std::exp(-rates_[static_cast<std::size_t>(ia)] * (tau - a.t));
    const double wb = b.w * std::exp(-rates_[static_cast<std::size_t>(ib)] * (tau - b.t));
    return {wa, wb, tau};
  }

  const protocol_tree& p_;
  const hardware_chain& chain_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::vector<std::geometric_distribution<std::int64_t>> gen_;
  std::vector<double> rates_;
};

}  // namespace detail

inline monte_carlo_estimate monte_carlo(const protocol_tree& p,
                                        const hardware_chain& chain,
                                        std::uint64_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw validation_error("monte_carlo: n_samples must be >= 1");
  chain.validate();
  p.validate(chain.n_links());
  detail::process_sampler sampler(p, chain, seed);
  // Welford accumulators.
  double mt = 0.0, st = 0.0, mw = 0.0, sw = 0.0;
  for (std::uint64_t k = 1; k <= n_samples; ++k) {
    const auto s = sampler.draw();
    const double dt = s.t - mt;
    mt += dt / static_cast<double>(k);
    st += dt * (s.t - mt);
    const double dw = s.w - mw;
    mw += dw / static_cast<double>(k);
    sw += dw * (s.w - mw);
  }
  monte_carlo_estimate e;
  e.n_samples = n_samples;
  e.mean_time = mt;
  e.mean_werner = mw;
  if (n_samples > 1) {
    const double n = static_cast<double>(n_samples);
    e.se_time = std::sqrt(st / (n - 1.0) / n);
    e.se_werner = std::sqrt(sw / (n - 1.0) / n);
  }
  return e;
}

/// Agreement within `n_sigma` standard errors; a zero standard error demands
/// agreement to 1e-9 relative.
inline bool within_standard_errors(double analytic, double estimate, double se,
                                   double n_sigma = 4.0) {
  const double tol = std::max(n_sigma * se, 1e-9 * std::max(1.0, std::abs(analytic)));
  return std::abs(analytic - estimate) <= tol;
}

}  // namespace repchain
