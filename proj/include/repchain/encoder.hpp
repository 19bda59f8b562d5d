#pragma once

// Maps a point (gamma, K, eta, tau) to a sampled protocol: gamma picks a tree
// shape along the symmetricity ordering, and K distillation rounds are spread
// over the vertices by repeated Normal draws of a vertex position.

#include <algorithm>
#include <cmath>
#include <map>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "repchain/errors.hpp"
#include "repchain/protocol.hpp"

namespace repchain {

struct encoder_params {
  double gamma = 0.0;  // [0, 1], shape symmetricity rank
  int K = 0;           // [0, v beta], total rounds
  double eta = -1.0;   // [-1, 1], -1 leaves first, +1 root
  double tau = 0.0;    // [0, 1], spread of the placement

  void validate(int n_vertices, int beta) const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw validation_error("gamma must be in [0, 1]");
    if (!(eta >= -1.0 && eta <= 1.0)) throw validation_error("eta must be in [-1, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw validation_error("tau must be in [0, 1]");
    if (K < 0 || K > n_vertices * beta)
      throw validation_error("K = " + std::to_string(K) + " outside [0, v*beta = " +
                             std::to_string(n_vertices * beta) + "]");
  }

  friend bool operator==(const encoder_params&, const encoder_params&) = default;
};

namespace detail {

// Shapes sorted by symmetricity, memoised per leaf count.
inline const std::vector<shape_id>& sorted_shapes(int n_leaves) {
  static std::mutex mutex;
  static std::map<int, std::vector<shape_id>> memo;
  std::lock_guard lock(mutex);
  auto it = memo.find(n_leaves);
  if (it == memo.end()) it = memo.emplace(n_leaves, shapes_by_symmetricity(n_leaves)).first;
  return it->second;
}

}  // namespace detail

/// Shape at position round(gamma (M - 1)) of the ascending-symmetricity order.
inline shape_id select_shape(double gamma, int n_nodes) {
  if (n_nodes < 2) throw validation_error("select_shape: need N >= 2");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw validation_error("gamma must be in [0, 1]");
  const auto& shapes = detail::sorted_shapes(n_nodes - 1);
  const auto m = static_cast<double>(shapes.size() - 1);
  return shapes[static_cast<std::size_t>(std::lround(gamma * m))];
}

/// Labels along canonical_vertex_order (index 0 = position 1 = first leaf,
/// last = root). Each of the K rounds lands at clamp(round(x), 1, v) with
/// x ~ Normal((eta + 1) v / 2, tau v); a full vertex (beta rounds) passes the
/// round to the nearest position with spare capacity, lower index first on
/// ties.
template <class Rng>
std::vector<int> assign_distillation(int n_vertices, int K, double eta, double tau,
                                     int beta, Rng& rng) {
  if (n_vertices < 1) throw validation_error("assign_distillation: need v >= 1");
  if (beta < 0) throw validation_error("assign_distillation: need beta >= 0");
  if (K < 0 || K > n_vertices * beta)
    throw validation_error("assign_distillation: K = " + std::to_string(K) +
                           " exceeds v*beta = " + std::to_string(n_vertices * beta));
  const double v = static_cast<double>(n_vertices);
  const double mu = (eta + 1.0) * v / 2.0;
  const double sigma = tau * v;
  std::normal_distribution<double> normal(mu, sigma > 0.0 ? sigma : 1.0);

  std::vector<int> labels(static_cast<std::size_t>(n_vertices), 0);
  for (int r = 0; r < K; ++r) {
    const double x = sigma > 0.0 ? normal(rng) : mu;
    const long pos = std::clamp(std::lround(x), 1L, static_cast<long>(n_vertices));
    long target = pos - 1;
    if (labels[static_cast<std::size_t>(target)] >= beta) {
      target = -1;
      for (long d = 1; d < n_vertices && target < 0; ++d) {
        const long lo = pos - 1 - d, hi = pos - 1 + d;
        if (lo >= 0 && labels[static_cast<std::size_t>(lo)] < beta) target = lo;
        else if (hi < n_vertices && labels[static_cast<std::size_t>(hi)] < beta) target = hi;
      }
    }
    ++labels[static_cast<std::size_t>(target)];
  }
  return labels;
}

/// Samples one protocol for an N-node chain with per-vertex cap beta.
template <class Rng>
protocol_tree encode(const encoder_params& params, int n_nodes, int beta, Rng& rng) {
  if (n_nodes < 2) throw validation_error("encode: need N >= 2");
  const int v = 2 * n_nodes - 3;
  params.validate(v, beta);
  const shape_id s = select_shape(params.gamma, n_nodes);
  const auto labels = assign_distillation(v, params.K, params.eta, params.tau, beta, rng);
  return with_canonical_labels(s.shape, labels);
}

/// Seeded convenience overload.
inline protocol_tree encode(const encoder_params& params, int n_nodes, int beta,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return encode(params, n_nodes, beta, rng);
}

}  // namespace repchain
