#pragma once

// Scalar Werner-parameter algebra. A Werner state is rho(w) = w |Phi+><Phi+| +
// (1 - w) I/4; every quantity propagated through a repeater protocol is a
// function of w alone, so the density matrix is never formed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "repchain/errors.hpp"

namespace repchain::kernels {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

/// Werner parameter, always in [0, 1].
class werner_param {
public:
  constexpr werner_param() = default;

  explicit werner_param(double w) : w_(w) {
    if (!(w >= 0.0 && w <= 1.0))
      throw validation_error("Werner parameter out of [0, 1]: " +
                             std::to_string(w));
  }

  constexpr double value() const noexcept { return w_; }

  friend constexpr bool operator==(werner_param, werner_param) = default;

private:
  double w_ = 0.0;
};

namespace detail {

inline double checked_w(double w) { return werner_param(w).value(); }

// Results of products and ratios of in-range values can drift by an ulp.
inline double clamp_unit(double w) { return std::clamp(w, 0.0, 1.0); }

}  // namespace detail

/// F = (1 + 3w) / 4.
inline double fidelity_from_werner(werner_param w) {
  return (1.0 + 3.0 * w.value()) / 4.0;
}

inline double fidelity_from_werner(double w) {
  return fidelity_from_werner(werner_param(w));
}

/// Memory decoherence while a link waits `dt` time units with its two qubits
/// held in memories of coherence times `tcoh_a` and `tcoh_b` (either may be
/// infinite).
inline double decay(double w, double dt, double tcoh_a, double tcoh_b) {
  detail::checked_w(w);
  if (!(dt >= 0.0)) throw validation_error("decay: negative wait time");
  if (!(tcoh_a > 0.0) || !(tcoh_b > 0.0))
    throw validation_error("decay: coherence times must be positive");
  return w * std::exp(-dt / tcoh_a) * std::exp(-dt / tcoh_b);
}

inline werner_param decay(werner_param w, double dt, double tcoh_a,
                          double tcoh_b) {
  return werner_param(decay(w.value(), dt, tcoh_a, tcoh_b));
}

/// Output of a successful swap of two (already decayed) links.
inline double swap_output(double wa, double wb) {
  return detail::checked_w(wa) * detail::checked_w(wb);
}

/// BBPSSW success probability for one distillation attempt.
inline double dist_success(double wa, double wb) {
  return (1.0 + detail::checked_w(wa) * detail::checked_w(wb)) / 2.0;
}

/// BBPSSW output Werner parameter conditional on success.
inline double dist_output(double wa, double wb) {
  const double a = detail::checked_w(wa);
  const double b = detail::checked_w(wb);
  return detail::clamp_unit((a + b + 4.0 * a * b) / (6.0 * dist_success(a, b)));
}

/// Binary entropy in bits; h2(0) = h2(1) = 0.
inline double binary_entropy(double q) {
  if (q <= 0.0 || q >= 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

/// BB84 secret fraction for a Werner pair with symmetric QBER Q = (1 - w)/2,
/// clamped at zero.
inline double secret_fraction(double w) {
  const double qber = (1.0 - detail::checked_w(w)) / 2.0;
  return std::max(0.0, 1.0 - 2.0 * binary_entropy(qber));
}

inline double secret_fraction(werner_param w) {
  return secret_fraction(w.value());
}

}  // namespace repchain::kernels
