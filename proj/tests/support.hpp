#pragma once

#include <random>

#include "repchain/protocol.hpp"

namespace repchain::fixtures {

// Uniform split points, uniform labels in {0..beta}.
template <class Rng>
protocol_tree random_protocol(Rng& rng, int first_link, int n_links, int beta) {
  std::uniform_int_distribution<int> label(0, beta);
  if (n_links == 1) return protocol_tree::leaf(first_link, label(rng));
  std::uniform_int_distribution<int> split(1, n_links - 1);
  const int left = split(rng);
  auto l = random_protocol(rng, first_link, left, beta);
  auto r = random_protocol(rng, first_link + left, n_links - left, beta);
  return protocol_tree::join(l, r, label(rng));
}

template <class Rng>
protocol_tree random_protocol(Rng& rng, int n_links, int beta) {
  return random_protocol(rng, 0, n_links, beta);
}

}  // namespace repchain::fixtures

#include "repchain/chain.hpp"

namespace repchain::fixtures {

// Small chain with fast generation, in either coherence mode.
template <class Rng>
hardware_chain random_chain(Rng& rng, std::size_t n_nodes) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  hardware_chain c;
  c.mode = u(rng) < 0.5 ? coherence_mode::per_node : coherence_mode::per_link_joint;
  c.p_swap = 0.5 + 0.5 * u(rng);
  for (std::size_t j = 0; j < n_nodes; ++j) c.nodes.push_back({20.0 + 480.0 * u(rng)});
  for (std::size_t j = 0; j + 1 < n_nodes; ++j)
    c.links.push_back({0.2 + 0.8 * u(rng), 0.7 + 0.3 * u(rng), 20.0 + 480.0 * u(rng)});
  c.validate();
  return c;
}

// Expected number of elementary generations a protocol consumes per attempt
// tree, ignoring failures: each distillation round doubles its subtree.
inline double protocol_cost(const protocol_tree& p, int i) {
  const auto& v = p.at(i);
  const double base = v.is_leaf() ? 1.0 : protocol_cost(p, v.left) + protocol_cost(p, v.right);
  return base * static_cast<double>(1u << v.rounds);
}

inline double protocol_cost(const protocol_tree& p) { return protocol_cost(p, p.root_index()); }

}  // namespace repchain::fixtures
