#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "repchain/errors.hpp"
#include "repchain/kernels.hpp"

namespace repchain {

/// How memory decoherence is attributed to a link.
///
/// per_node: each node carries its own coherence time and a link waiting in
/// nodes a and b decays as exp(-dt/t_a) exp(-dt/t_b).
///
/// per_link_joint: each elementary link carries one joint coherence time for
/// its pair of memories, exp(-dt/t_link). A longer link spanning elementary
/// links i..j decays at rate 1/(2 t_i) + 1/(2 t_j), i.e. half of each outer
/// link's joint rate is charged to each of its end memories.
enum class coherence_mode { per_node, per_link_joint };

inline std::string to_string(coherence_mode m) {
  return m == coherence_mode::per_node ? "per-node" : "per-link-joint";
}

struct node_spec {
  double t_coh = kernels::infinity;  // time units
};

struct link_spec {
  double p_gen = 1.0;
  double w0 = 1.0;
  double t_coh = kernels::infinity;  // joint coherence, per_link_joint only
};

/// A link between two nodes of the chain, left_node < right_node.
struct link_endpoints {
  std::size_t left_node = 0;
  std::size_t right_node = 1;

  friend bool operator==(const link_endpoints&, const link_endpoints&) = default;
};

struct hardware_chain {
  std::vector<node_spec> nodes;
  std::vector<link_spec> links;
  double p_swap = 1.0;
  coherence_mode mode = coherence_mode::per_node;
  std::optional<double> t_unit_seconds;

  std::size_t n_nodes() const noexcept { return nodes.size(); }
  std::size_t n_links() const noexcept { return links.size(); }

  void validate() const {
    if (nodes.size() < 2) throw validation_error("chain needs at least 2 nodes");
    if (links.size() + 1 != nodes.size())
      throw validation_error("chain needs exactly one link fewer than nodes");
    auto prob_ok = [](double p) { return p > 0.0 && p <= 1.0; };
    if (!prob_ok(p_swap)) throw validation_error("p_swap must be in (0, 1]");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const auto& l = links[i];
      const std::string tag = "link " + std::to_string(i) + ": ";
      if (!prob_ok(l.p_gen)) throw validation_error(tag + "p_gen must be in (0, 1]");
      if (!(l.w0 >= 0.0 && l.w0 <= 1.0))
        throw validation_error(tag + "w0 must be in [0, 1]");
      if (!(l.t_coh > 0.0)) throw validation_error(tag + "t_coh must be positive");
    }
    for (std::size_t j = 0; j < nodes.size(); ++j)
      if (!(nodes[j].t_coh > 0.0))
        throw validation_error("node " + std::to_string(j) +
                               ": t_coh must be positive");
    if (t_unit_seconds && !(*t_unit_seconds > 0.0))
      throw validation_error("t_unit_seconds must be positive");
  }

  void check_endpoints(const link_endpoints& e) const {
    if (!(e.left_node < e.right_node) || e.right_node >= nodes.size())
      throw validation_error("link endpoints (" + std::to_string(e.left_node) +
                             ", " + std::to_string(e.right_node) +
                             ") not in chain of " +
                             std::to_string(nodes.size()) + " nodes");
  }

  /// Combined decay rate (per time unit) of a link with the given endpoints:
  /// w' = w exp(-rate * dt).
  double decay_rate(const link_endpoints& e) const {
    check_endpoints(e);
    if (mode == coherence_mode::per_node)
      return 1.0 / nodes[e.left_node].t_coh + 1.0 / nodes[e.right_node].t_coh;
    const double first = links[e.left_node].t_coh;
    const double last = links[e.right_node - 1].t_coh;
    return 0.5 / first + 0.5 / last;
  }

  /// Coherence times of the two memories holding a link, for use with
  /// kernels::decay. In joint mode the rate is split evenly between them.
  std::pair<double, double> endpoint_coherence(const link_endpoints& e) const {
    check_endpoints(e);
    if (mode == coherence_mode::per_node)
      return {nodes[e.left_node].t_coh, nodes[e.right_node].t_coh};
    const double rate = decay_rate(e);
    const double each = rate > 0.0 ? 2.0 / rate : kernels::infinity;
    return {each, each};
  }

  /// Homogeneous chain of `n_nodes` nodes. With per_link_joint the t_coh is
  /// the joint coherence of a link's two memories; with per_node it is each
  /// node's own coherence time.
  static hardware_chain homogeneous(std::size_t n_nodes, double p_gen, double w0,
                                    double t_coh, double p_swap,
                                    coherence_mode mode) {
    hardware_chain c;
    c.mode = mode;
    c.p_swap = p_swap;
    c.nodes.assign(n_nodes, node_spec{mode == coherence_mode::per_node
                                          ? t_coh
                                          : kernels::infinity});
    c.links.assign(n_nodes > 0 ? n_nodes - 1 : 0,
                   link_spec{p_gen, w0,
                             mode == coherence_mode::per_link_joint
                                 ? t_coh
                                 : kernels::infinity});
    c.validate();
    return c;
  }
};

}  // namespace repchain
