#pragma once

// Protocol trees: a full binary tree whose leaves are the chain's elementary
// links (left to right) and whose internal vertices are swaps. Every vertex
// carries the number of distillation rounds applied to its link.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "json.hpp"
#include "repchain/errors.hpp"

namespace repchain {

using big_int = boost::multiprecision::cpp_int;

struct vertex {
  int left = -1;   // child indices, -1 for leaves
  int right = -1;
  int link = -1;   // elementary link index, leaves only
  int rounds = 0;  // distillation rounds on this vertex's link
  int first_link = 0;  // span of elementary links covered
  int last_link = 0;

  bool is_leaf() const noexcept { return left < 0; }

  friend bool operator==(const vertex&, const vertex&) = default;
};

/// Vertices are stored in post-order, root last. Only leaf() and join()
/// construct trees, so two equal trees always have identical storage.
class protocol_tree {
public:
  static protocol_tree leaf(int link, int rounds = 0) {
    if (link < 0) throw validation_error("leaf link index must be >= 0");
    if (rounds < 0) throw validation_error("distillation rounds must be >= 0");
    protocol_tree t;
    t.vertices_.push_back(vertex{-1, -1, link, rounds, link, link});
    return t;
  }

  static protocol_tree join(const protocol_tree& left, const protocol_tree& right,
                            int rounds = 0) {
    if (rounds < 0) throw validation_error("distillation rounds must be >= 0");
    if (left.root().last_link + 1 != right.root().first_link)
      throw validation_error("joined subtrees must cover adjacent link spans");
    protocol_tree t;
    t.vertices_.reserve(left.size() + right.size() + 1);
    t.vertices_ = left.vertices_;
    const int offset = static_cast<int>(left.size());
    for (vertex v : right.vertices_) {
      if (!v.is_leaf()) {
        v.left += offset;
        v.right += offset;
      }
      t.vertices_.push_back(v);
    }
    t.vertices_.push_back(vertex{offset - 1, static_cast<int>(t.vertices_.size()) - 1,
                                 -1, rounds, left.root().first_link,
                                 right.root().last_link});
    return t;
  }

  std::size_t size() const noexcept { return vertices_.size(); }
  std::size_t n_leaves() const noexcept { return (vertices_.size() + 1) / 2; }
  std::size_t n_nodes() const noexcept { return n_leaves() + 1; }

  int root_index() const noexcept { return static_cast<int>(vertices_.size()) - 1; }
  const vertex& root() const { return vertices_.back(); }
  const vertex& at(int i) const { return vertices_.at(static_cast<std::size_t>(i)); }
  const std::vector<vertex>& vertices() const noexcept { return vertices_; }

  void set_rounds(int i, int rounds) {
    if (rounds < 0) throw validation_error("distillation rounds must be >= 0");
    vertices_.at(static_cast<std::size_t>(i)).rounds = rounds;
  }

  /// Same shape with every label zeroed.
  protocol_tree shape() const {
    protocol_tree t = *this;
    for (auto& v : t.vertices_) v.rounds = 0;
    return t;
  }

  int total_rounds() const noexcept {
    int k = 0;
    for (const auto& v : vertices_) k += v.rounds;
    return k;
  }

  int max_rounds() const noexcept {
    int k = 0;
    for (const auto& v : vertices_) k = std::max(k, v.rounds);
    return k;
  }

  /// Checks the tree covers links 0..n_links-1 and, if beta >= 0, that no
  /// label exceeds beta.
  void validate(std::size_t n_links, int beta = -1) const {
    if (root().first_link != 0 ||
        root().last_link + 1 != static_cast<int>(n_links))
      throw validation_error("protocol covers links " +
                             std::to_string(root().first_link) + ".." +
                             std::to_string(root().last_link) + " but chain has " +
                             std::to_string(n_links) + " links");
    if (beta >= 0 && max_rounds() > beta)
      throw validation_error("protocol has a vertex with more than beta = " +
                             std::to_string(beta) + " distillation rounds");
  }

  /// Depth of every vertex in edges from the root.
  std::vector<int> depths() const {
    std::vector<int> d(vertices_.size(), 0);
    for (int i = root_index(); i >= 0; --i) {
      const auto& v = vertices_[static_cast<std::size_t>(i)];
      if (!v.is_leaf()) {
        d[static_cast<std::size_t>(v.left)] = d[static_cast<std::size_t>(i)] + 1;
        d[static_cast<std::size_t>(v.right)] = d[static_cast<std::size_t>(i)] + 1;
      }
    }
    return d;
  }

  std::vector<int> leaf_depths() const {
    const auto d = depths();
    std::vector<std::pair<int, int>> by_link;
    for (std::size_t i = 0; i < vertices_.size(); ++i)
      if (vertices_[i].is_leaf()) by_link.emplace_back(vertices_[i].link, d[i]);
    std::sort(by_link.begin(), by_link.end());
    std::vector<int> out;
    for (auto [l, depth] : by_link) out.push_back(depth);
    return out;
  }

  /// Left/right reflection, relabelling links so leaves stay in chain order.
  protocol_tree mirrored() const { return mirror_at(root_index(), root().last_link); }

  friend bool operator==(const protocol_tree&, const protocol_tree&) = default;

private:
  protocol_tree() = default;

  protocol_tree mirror_at(int i, int last) const {
    const auto& v = at(i);
    if (v.is_leaf()) return leaf(last - v.link, v.rounds);
    return join(mirror_at(v.right, last), mirror_at(v.left, last), v.rounds);
  }

  std::vector<vertex> vertices_;
};

// ---------------------------------------------------------------------------
// Counting

inline big_int catalan(unsigned n) {
  big_int c = 1;
  for (unsigned k = 0; k < n; ++k) c = c * 2 * (2 * k + 1) / (k + 2);
  return c;
}

/// |P| = C(N - 2) (beta + 1)^(2N - 3).
inline big_int count_space(int n_nodes, int beta) {
  if (n_nodes < 2) throw validation_error("count_space: need N >= 2");
  if (beta < 0) throw validation_error("count_space: need beta >= 0");
  big_int labels = boost::multiprecision::pow(big_int(beta + 1),
                                              static_cast<unsigned>(2 * n_nodes - 3));
  return catalan(static_cast<unsigned>(n_nodes - 2)) * labels;
}

// ---------------------------------------------------------------------------
// Shapes

struct shape_id {
  protocol_tree shape;
  std::size_t index = 0;  // position in canonical enumeration
  double symmetricity = 1.0;
};

/// 1 - Var(leaf depths) / max leaf depth; a lone leaf scores 1.
inline double symmetricity(const protocol_tree& t) {
  const auto d = t.leaf_depths();
  const int max_depth = *std::max_element(d.begin(), d.end());
  if (max_depth == 0) return 1.0;
  double mean = 0.0;
  for (int x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (int x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(d.size());
  return 1.0 - var / max_depth;
}

namespace detail {

inline void shapes_over(int first_link, int count, std::vector<protocol_tree>& out) {
  if (count == 1) {
    out.push_back(protocol_tree::leaf(first_link));
    return;
  }
  for (int left = 1; left < count; ++left) {
    std::vector<protocol_tree> ls, rs;
    shapes_over(first_link, left, ls);
    shapes_over(first_link + left, count - left, rs);
    for (const auto& l : ls)
      for (const auto& r : rs) out.push_back(protocol_tree::join(l, r));
  }
}

}  // namespace detail

/// All full binary tree shapes with n_leaves leaves, ordered recursively by
/// left-subtree size ascending.
inline std::vector<shape_id> enumerate_shapes(int n_leaves) {
  if (n_leaves < 1) throw validation_error("enumerate_shapes: need >= 1 leaf");
  std::vector<protocol_tree> trees;
  detail::shapes_over(0, n_leaves, trees);
  std::vector<shape_id> out;
  out.reserve(trees.size());
  for (std::size_t i = 0; i < trees.size(); ++i)
    out.push_back(shape_id{trees[i], i, symmetricity(trees[i])});
  return out;
}

/// Shapes ordered from least to most symmetric, ties by enumeration index.
inline std::vector<shape_id> shapes_by_symmetricity(int n_leaves) {
  auto shapes = enumerate_shapes(n_leaves);
  std::stable_sort(shapes.begin(), shapes.end(), [](const auto& a, const auto& b) {
    return a.symmetricity < b.symmetricity;
  });
  return shapes;
}

/// Leaves in chain order, then internal vertices from deepest to shallowest
/// (left to right within a depth), root last.
inline std::vector<int> canonical_vertex_order(const protocol_tree& t) {
  const auto depth = t.depths();
  std::vector<int> leaves, internal;
  for (int i = 0; i <= t.root_index(); ++i)
    (t.at(i).is_leaf() ? leaves : internal).push_back(i);
  std::sort(leaves.begin(), leaves.end(),
            [&](int a, int b) { return t.at(a).link < t.at(b).link; });
  // Spans of vertices at equal depth are disjoint, so first_link orders them
  // left to right.
  std::sort(internal.begin(), internal.end(), [&](int a, int b) {
    const auto da = depth[static_cast<std::size_t>(a)];
    const auto db = depth[static_cast<std::size_t>(b)];
    if (da != db) return da > db;
    return t.at(a).first_link < t.at(b).first_link;
  });
  leaves.insert(leaves.end(), internal.begin(), internal.end());
  return leaves;
}

/// Labels along canonical_vertex_order.
inline std::vector<int> canonical_labels(const protocol_tree& t) {
  std::vector<int> k;
  for (int i : canonical_vertex_order(t)) k.push_back(t.at(i).rounds);
  return k;
}

inline protocol_tree with_canonical_labels(const protocol_tree& shape,
                                           const std::vector<int>& labels) {
  const auto order = canonical_vertex_order(shape);
  if (labels.size() != order.size())
    throw validation_error("label vector length does not match vertex count");
  protocol_tree t = shape;
  for (std::size_t i = 0; i < order.size(); ++i) t.set_rounds(order[i], labels[i]);
  return t;
}

// ---------------------------------------------------------------------------
// The full space of labelled protocols

/// Protocols for N nodes with labels in {0..beta}, indexed shape-major; within
/// a shape the labels along the canonical order count as a base-(beta + 1)
/// number with the last position (the root) varying fastest.
class protocol_space {
public:
  protocol_space(int n_nodes, int beta)
      : n_nodes_(n_nodes), beta_(beta), shapes_(enumerate_shapes(n_nodes - 1)) {
    if (n_nodes < 2) throw validation_error("protocol_space: need N >= 2");
    if (beta < 0) throw validation_error("protocol_space: need beta >= 0");
    orders_.reserve(shapes_.size());
    for (const auto& s : shapes_) orders_.push_back(canonical_vertex_order(s.shape));
  }

  int n_nodes() const noexcept { return n_nodes_; }
  int beta() const noexcept { return beta_; }
  int n_vertices() const noexcept { return 2 * n_nodes_ - 3; }
  const std::vector<shape_id>& shapes() const noexcept { return shapes_; }

  big_int cardinality() const { return count_space(n_nodes_, beta_); }

  /// Cardinality as a native integer; throws if it does not fit.
  std::uint64_t size() const {
    const big_int c = cardinality();
    if (c > big_int(std::numeric_limits<std::uint64_t>::max()))
      throw space_too_large(c.str(), "2^64");
    return static_cast<std::uint64_t>(c);
  }

  protocol_tree at(std::uint64_t index) const {
    const std::uint64_t per_shape = labels_per_shape();
    const std::size_t s = static_cast<std::size_t>(index / per_shape);
    if (s >= shapes_.size()) throw validation_error("protocol index out of range");
    std::uint64_t rem = index % per_shape;
    protocol_tree t = shapes_[s].shape;
    const auto& order = orders_[s];
    for (std::size_t i = order.size(); i-- > 0;) {
      t.set_rounds(order[i], static_cast<int>(rem % static_cast<std::uint64_t>(beta_ + 1)));
      rem /= static_cast<std::uint64_t>(beta_ + 1);
    }
    return t;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    const std::uint64_t n = size();
    for (std::uint64_t i = 0; i < n; ++i) fn(at(i), i);
  }

private:
  std::uint64_t labels_per_shape() const {
    std::uint64_t n = 1;
    for (int i = 0; i < n_vertices(); ++i) n *= static_cast<std::uint64_t>(beta_ + 1);
    return n;
  }

  int n_nodes_;
  int beta_;
  std::vector<shape_id> shapes_;
  std::vector<std::vector<int>> orders_;
};

/// Every protocol of the (N, beta) space, in protocol_space index order.
inline std::vector<protocol_tree> enumerate_protocols(int n_nodes, int beta) {
  protocol_space space(n_nodes, beta);
  std::vector<protocol_tree> out;
  out.reserve(static_cast<std::size_t>(space.size()));
  space.for_each([&](const protocol_tree& t, std::uint64_t) { out.push_back(t); });
  return out;
}

// ---------------------------------------------------------------------------
// Text form: leaf "(L<i>:<k>)", internal "(<left><right>:<k>)"

namespace detail {

inline void serialize_at(const protocol_tree& t, int i, std::string& out) {
  const auto& v = t.at(i);
  out += '(';
  if (v.is_leaf()) {
    out += 'L';
    out += std::to_string(v.link);
  } else {
    serialize_at(t, v.left, out);
    serialize_at(t, v.right, out);
  }
  out += ':';
  out += std::to_string(v.rounds);
  out += ')';
}

class protocol_parser {
public:
  explicit protocol_parser(std::string_view text) : s_(text) {}

  protocol_tree parse() {
    protocol_tree t = parse_vertex();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after protocol");
    return t;
  }

private:
  [[noreturn]] void fail(const std::string& what) const { throw parse_error(what, pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size()) fail(std::string("expected '") + c + "' but text ended");
    if (s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  int parse_int() {
    skip_ws();
    const std::size_t start = pos_;
    long long value = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      value = value * 10 + (s_[pos_] - '0');
      if (value > 1'000'000) fail("integer too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a non-negative integer");
    return static_cast<int>(value);
  }

  protocol_tree parse_vertex() {
    expect('(');
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == 'L') {
      ++pos_;
      const int link = parse_int();
      expect(':');
      const int k = parse_int();
      expect(')');
      return protocol_tree::leaf(link, k);
    }
    if (pos_ >= s_.size() || s_[pos_] != '(') fail("expected 'L' or '('");
    const std::size_t left_at = pos_;
    protocol_tree left = parse_vertex();
    protocol_tree right = parse_vertex();
    expect(':');
    const int k = parse_int();
    expect(')');
    if (left.root().last_link + 1 != right.root().first_link)
      throw parse_error("children cover non-adjacent link spans", left_at);
    return protocol_tree::join(left, right, k);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const protocol_tree& t) {
  std::string out;
  detail::serialize_at(t, t.root_index(), out);
  return out;
}

/// Whitespace is ignored. Errors carry the character offset.
inline protocol_tree parse_protocol(std::string_view text) {
  return detail::protocol_parser(text).parse();
}

// ---------------------------------------------------------------------------
// JSON form: {"type": "leaf", "link": i, "k": k} or
//            {"type": "internal", "k": k, "left": {...}, "right": {...}}

namespace detail {

inline nlohmann::json to_json_at(const protocol_tree& t, int i) {
  const auto& v = t.at(i);
  if (v.is_leaf()) return {{"type", "leaf"}, {"link", v.link}, {"k", v.rounds}};
  return {{"type", "internal"},
          {"k", v.rounds},
          {"left", to_json_at(t, v.left)},
          {"right", to_json_at(t, v.right)}};
}

}  // namespace detail

inline nlohmann::json to_json(const protocol_tree& t) {
  return detail::to_json_at(t, t.root_index());
}

inline protocol_tree protocol_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j.contains("k"))
    throw validation_error("protocol JSON vertex needs 'type' and 'k'");
  const auto type = j.at("type").get<std::string>();
  const int k = j.at("k").get<int>();
  if (type == "leaf") {
    for (const auto& [key, _] : j.items())
      if (key != "type" && key != "k" && key != "link")
        throw validation_error("unknown key in leaf vertex: " + key);
    return protocol_tree::leaf(j.at("link").get<int>(), k);
  }
  if (type == "internal") {
    for (const auto& [key, _] : j.items())
      if (key != "type" && key != "k" && key != "left" && key != "right")
        throw validation_error("unknown key in internal vertex: " + key);
    return protocol_tree::join(protocol_from_json(j.at("left")),
                               protocol_from_json(j.at("right")), k);
  }
  throw validation_error("protocol JSON vertex type must be 'leaf' or 'internal'");
}

}  // namespace repchain
