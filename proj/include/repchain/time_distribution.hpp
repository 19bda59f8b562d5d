#pragma once

// Discrete-time distributions of when a (sub)protocol delivers its output
// link, together with the Werner mass delivered at each time.
//
// For a link delivered at random time T with random Werner parameter W we store
//   p(t) = Pr[T = t]          and   v(t) = E[W 1{T = t}],   t = 1..t_trunc.
// Swap output, distillation success and success x output are all bilinear in
// the two input Werner parameters, so these first moments propagate exactly
// through merges of independent inputs.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "repchain/chain.hpp"
#include "repchain/convolution.hpp"
#include "repchain/errors.hpp"
#include "repchain/kernels.hpp"

namespace repchain {

/// Negative entries above this are treated as transform round-off.
inline constexpr double negative_floor = -1e-14;

class time_distribution {
public:
  time_distribution() = default;

  /// Index i of both arrays holds time t = i + 1.
  time_distribution(std::vector<double> mass, std::vector<double> werner_mass)
      : p_(std::move(mass)), v_(std::move(werner_mass)) {
    if (p_.size() != v_.size())
      throw validation_error("time_distribution: array sizes differ");
    if (p_.empty()) throw validation_error("time_distribution: t_trunc must be >= 1");
    double total = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      if (!(p_[i] >= 0.0 && p_[i] <= 1.0))
        throw validation_error("time_distribution: mass outside [0, 1] at t = " +
                               std::to_string(i + 1));
      if (!(v_[i] >= 0.0 && v_[i] <= p_[i] * (1.0 + 1e-12)))
        throw validation_error("time_distribution: werner mass outside [0, p] at t = " +
                               std::to_string(i + 1));
      total += p_[i];
    }
    if (total > 1.0 + 1e-9) throw validation_error("time_distribution: total mass exceeds 1");
  }

  std::int64_t t_trunc() const noexcept { return static_cast<std::int64_t>(p_.size()); }

  /// Pr[ready exactly at t], 1 <= t <= t_trunc.
  double mass(std::int64_t t) const { return p_.at(static_cast<std::size_t>(t - 1)); }
  double werner_mass(std::int64_t t) const {
    return v_.at(static_cast<std::size_t>(t - 1));
  }

  std::span<const double> masses() const noexcept { return p_; }
  std::span<const double> werner_masses() const noexcept { return v_; }

  double coverage() const noexcept {
    double s = 0.0;
    for (double x : p_) s += x;
    return s;
  }

  double deficit() const noexcept { return 1.0 - coverage(); }

  std::size_t bytes() const noexcept { return 2 * p_.size() * sizeof(double); }

  friend bool operator==(const time_distribution&, const time_distribution&) = default;

private:
  std::vector<double> p_;
  std::vector<double> v_;
};

struct attempt_profiles {
  // Index i holds attempt duration tau = i + 1.
  std::vector<double> fail_mass;
  std::vector<double> succ_mass;
  std::vector<double> succ_werner_mass;

  std::int64_t t_trunc() const noexcept {
    return static_cast<std::int64_t>(succ_mass.size());
  }
};

enum class merge_op { swap, distill };

enum class compound_backend { renewal, doubling };

namespace detail {

inline void check_pair(const time_distribution& a, const link_endpoints& a_ends,
                       const time_distribution& b, const link_endpoints& b_ends,
                       const hardware_chain& chain) {
  if (a.t_trunc() != b.t_trunc())
    throw validation_error("attempt_profiles: mismatched t_trunc (" +
                           std::to_string(a.t_trunc()) + " vs " +
                           std::to_string(b.t_trunc()) + ")");
  chain.check_endpoints(a_ends);
  chain.check_endpoints(b_ends);
}

// Clamp transform round-off; anything more negative than the floor is a bug.
inline void apply_floor(std::vector<double>& x, const char* what) {
  for (double& e : x) {
    if (e < 0.0) {
      if (e < negative_floor)
        throw std::runtime_error(std::string(what) + ": negative mass " +
                                 std::to_string(e));
      e = 0.0;
    }
  }
}

inline time_distribution finish(std::vector<double> p, std::vector<double> v) {
  apply_floor(p, "compound_restarts");
  apply_floor(v, "compound_restarts");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (v[i] > p[i]) v[i] = p[i];
  return time_distribution(std::move(p), std::move(v));
}

}  // namespace detail

/// Elementary link generation: one heralded attempt per time unit.
inline time_distribution geometric_generation(double p_gen, double w0,
                                              std::int64_t t_trunc) {
  if (!(p_gen > 0.0 && p_gen <= 1.0))
    throw validation_error("geometric_generation: p_gen must be in (0, 1]");
  kernels::werner_param{w0};
  if (t_trunc < 1) throw validation_error("geometric_generation: t_trunc must be >= 1");
  std::vector<double> p(static_cast<std::size_t>(t_trunc));
  std::vector<double> v(p.size());
  double survive = 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = p_gen * survive;
    v[i] = w0 * p[i];
    survive *= 1.0 - p_gen;
  }
  return time_distribution(std::move(p), std::move(v));
}

/// One merge attempt of independent links a and b. The earlier-ready link
/// decays over the wait using its own endpoints' coherence; the attempt ends
/// at max(t1, t2).
///
/// Linear-time evaluation: the decay exp(-rate (t2 - t1)) factorizes into a
/// function of t1 times a function of t2, so every partial sum over the
/// earlier link is a running sum updated by one multiply per step.
inline attempt_profiles make_attempt_profiles(const time_distribution& a,
                                              const link_endpoints& a_ends,
                                              const time_distribution& b,
                                              const link_endpoints& b_ends,
                                              merge_op op,
                                              const hardware_chain& chain) {
  detail::check_pair(a, a_ends, b, b_ends, chain);
  const std::size_t n = static_cast<std::size_t>(a.t_trunc());
  const auto pa = a.masses(), va = a.werner_masses();
  const auto pb = b.masses(), vb = b.werner_masses();
  const double step_a = std::exp(-chain.decay_rate(a_ends));
  const double step_b = std::exp(-chain.decay_rate(b_ends));

  attempt_profiles out;
  out.fail_mass.resize(n);
  out.succ_mass.resize(n);
  out.succ_werner_mass.resize(n);

  // Sums over times strictly before tau: plain masses and decayed Werner
  // masses (aged up to tau).
  double pa_before = 0.0, pb_before = 0.0;
  double va_aged = 0.0, vb_aged = 0.0;
  const double p_swap = chain.p_swap;

  for (std::size_t i = 0; i < n; ++i) {
    const double both = pa[i] * pb[i] + pa[i] * pb_before + pa_before * pb[i];
    // E[W_a' W_b' 1{max = tau}] over the three orderings.
    const double ww = va[i] * vb[i] + va[i] * vb_aged + va_aged * vb[i];
    double succ = 0.0, succ_w = 0.0;
    if (op == merge_op::swap) {
      succ = p_swap * both;
      succ_w = p_swap * ww;
    } else {
      succ = 0.5 * (both + ww);
      const double linear = (va[i] * pb[i] + pa[i] * vb[i]) +
                            (va[i] * pb_before + pa[i] * vb_aged) +
                            (va_aged * pb[i] + pa_before * vb[i]);
      succ_w = (linear + 4.0 * ww) / 6.0;
    }
    out.succ_mass[i] = succ;
    out.succ_werner_mass[i] = succ_w;
    out.fail_mass[i] = std::max(0.0, both - succ);

    pa_before += pa[i];
    pb_before += pb[i];
    va_aged = step_a * (va_aged + va[i]);
    vb_aged = step_b * (vb_aged + vb[i]);
  }
  return out;
}

/// Quadratic double loop over (t1, t2) in terms of conditional means and the
/// scalar kernels. Kept as the reference the linear-time path is checked on.
inline attempt_profiles make_attempt_profiles_reference(
    const time_distribution& a, const link_endpoints& a_ends,
    const time_distribution& b, const link_endpoints& b_ends, merge_op op,
    const hardware_chain& chain) {
  detail::check_pair(a, a_ends, b, b_ends, chain);
  const std::int64_t n = a.t_trunc();
  const auto [ta1, ta2] = chain.endpoint_coherence(a_ends);
  const auto [tb1, tb2] = chain.endpoint_coherence(b_ends);

  attempt_profiles out;
  out.fail_mass.assign(static_cast<std::size_t>(n), 0.0);
  out.succ_mass.assign(static_cast<std::size_t>(n), 0.0);
  out.succ_werner_mass.assign(static_cast<std::size_t>(n), 0.0);

  for (std::int64_t t1 = 1; t1 <= n; ++t1) {
    const double ma = a.mass(t1);
    if (ma <= 0.0) continue;
    const double wa = kernels::detail::clamp_unit(a.werner_mass(t1) / ma);
    for (std::int64_t t2 = 1; t2 <= n; ++t2) {
      const double mb = b.mass(t2);
      if (mb <= 0.0) continue;
      const double wb = kernels::detail::clamp_unit(b.werner_mass(t2) / mb);
      const double wait = static_cast<double>(std::abs(t1 - t2));
      const double wa_ready = t1 < t2 ? kernels::decay(wa, wait, ta1, ta2) : wa;
      const double wb_ready = t2 < t1 ? kernels::decay(wb, wait, tb1, tb2) : wb;
      const double mass = ma * mb;
      const std::size_t tau = static_cast<std::size_t>(std::max(t1, t2) - 1);

      double p_succ = 0.0, w_out = 0.0;
      if (op == merge_op::swap) {
        p_succ = chain.p_swap;
        w_out = kernels::swap_output(wa_ready, wb_ready);
      } else {
        p_succ = kernels::dist_success(wa_ready, wb_ready);
        w_out = kernels::dist_output(wa_ready, wb_ready);
      }
      out.succ_mass[tau] += mass * p_succ;
      out.fail_mass[tau] += mass * (1.0 - p_succ);
      out.succ_werner_mass[tau] += mass * p_succ * w_out;
    }
  }
  return out;
}

/// Restart-on-failure: every failed attempt discards its inputs and a fresh
/// independent attempt begins. Solves P = Ps + Pf * P, V = Vs + Pf * V up to
/// the horizon.
inline time_distribution compound_restarts(
    const attempt_profiles& prof,
    compound_backend backend = compound_backend::doubling) {
  const std::size_t n = prof.succ_mass.size();
  if (n == 0 || prof.fail_mass.size() != n || prof.succ_werner_mass.size() != n)
    throw validation_error("compound_restarts: malformed attempt profiles");

  if (backend == compound_backend::renewal) {
    std::vector<double> p(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      // time t = i + 1; failures of duration s = j + 1 precede an outcome at t - s.
      double sp = prof.succ_mass[i], sv = prof.succ_werner_mass[i];
      for (std::size_t j = 0; j < i; ++j) {
        const double f = prof.fail_mass[j];
        if (f == 0.0) continue;
        sp += f * p[i - j - 1];
        sv += f * v[i - j - 1];
      }
      p[i] = sp;
      v[i] = sv;
    }
    return detail::finish(std::move(p), std::move(v));
  }

  // Renewal kernel R = sum_k Pf^{*k} as the product prod_m (1 + Pf^{*2^m}),
  // indexed by time from 0 (R[0] = 1). Pf^{*2^m} vanishes below 2^m, so the
  // product is exact on [0, n) once 2^m >= n.
  std::vector<double> renewal(n, 0.0);
  renewal[0] = 1.0;
  std::vector<double> power(n, 0.0);  // Pf^{*2^m}, time-indexed from 0
  for (std::size_t i = 0; i + 1 < n; ++i) power[i + 1] = prof.fail_mass[i];

  for (std::size_t reach = 1; reach < n; reach <<= 1) {
    if (n <= conv::direct_threshold) {
      auto prod = conv::direct_convolve(renewal, power, n);
      for (std::size_t i = 0; i < n; ++i) renewal[i] += prod[i];
      power = conv::direct_convolve(power, power, n);
    } else {
      const std::size_t size = conv::transform_size(n);
      conv::spectrum sp(power, size);
      conv::spectrum sr(renewal, size);
      auto prod = multiply_inverse(sr, sp, n);
      for (std::size_t i = 0; i < n; ++i) renewal[i] += prod[i];
      if ((reach << 1) < n) power = multiply_inverse(sp, sp, n);
    }
    detail::apply_floor(renewal, "compound_restarts");
    detail::apply_floor(power, "compound_restarts");
  }

  // Outcome at time t = i + 1 (index i) from success mass at index j and
  // renewal delay i - j.
  auto p = conv::convolve(prof.succ_mass, renewal, n);
  auto v = conv::convolve(prof.succ_werner_mass, renewal, n);
  return detail::finish(std::move(p), std::move(v));
}

/// One restart-compounded merge of two independent links.
inline time_distribution merge(const time_distribution& a,
                               const link_endpoints& a_ends,
                               const time_distribution& b,
                               const link_endpoints& b_ends, merge_op op,
                               const hardware_chain& chain,
                               compound_backend backend = compound_backend::doubling) {
  return compound_restarts(make_attempt_profiles(a, a_ends, b, b_ends, op, chain),
                           backend);
}

struct coverage_policy {
  double epsilon = 0.01;
  std::int64_t t_init = 64;
  std::int64_t t_cap = std::int64_t{1} << 22;
};

/// Rebuilds at doubling horizons until coverage >= 1 - epsilon. Throws
/// truncation_cap_exceeded once the next horizon would pass t_cap.
template <class Build>
time_distribution ensure_coverage(Build&& build, const coverage_policy& policy) {
  if (!(policy.epsilon > 0.0 && policy.epsilon < 1.0))
    throw validation_error("ensure_coverage: epsilon must be in (0, 1)");
  if (policy.t_init < 1 || policy.t_init > policy.t_cap)
    throw validation_error("ensure_coverage: need 1 <= t_init <= t_cap");
  std::int64_t t = policy.t_init;
  for (;;) {
    time_distribution d = build(t);
    const double cov = d.coverage();
    if (cov >= 1.0 - policy.epsilon) return d;
    if (t > policy.t_cap / 2) throw truncation_cap_exceeded(cov, t, policy.t_cap);
    t *= 2;
  }
}

struct distribution_summary {
  double mean_time = 0.0;
  double mean_werner = 0.0;
  double coverage = 0.0;
};

/// Means conditional on delivery within the horizon.
inline distribution_summary summarize(const time_distribution& d) {
  double mass = 0.0, tmass = 0.0, wmass = 0.0;
  const auto p = d.masses(), v = d.werner_masses();
  for (std::size_t i = 0; i < p.size(); ++i) {
    mass += p[i];
    tmass += static_cast<double>(i + 1) * p[i];
    wmass += v[i];
  }
  if (!(mass > 0.0)) throw validation_error("summarize: zero coverage");
  return {tmass / mass, kernels::detail::clamp_unit(wmass / mass), mass};
}

/// CSV with header "t,p,v", one row per time step.
inline void write_distribution_csv(std::ostream& os, const time_distribution& d) {
  os << "t,p,v\n";
  char buf[96];
  for (std::int64_t t = 1; t <= d.t_trunc(); ++t) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(t),
                  d.mass(t), d.werner_mass(t));
    os << buf;
  }
}

}  // namespace repchain
