#pragma once

// Directed tree (arborescence) topology and the queries the solvers and
// multi-level hierarchies are built on. All types here are immutable after
// construction and safe to share across threads.

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "treesaddle/types.hpp"

namespace treesaddle {

struct Arc {
  int id = 0;    // dense 1..M, in input order
  int tail = 0;  // parent-side endpoint
  int head = 0;  // child-side endpoint
};

/// A rooted directed tree with every arc oriented away from the root.
///
/// Vertex ids are dense 1..N and arc ids dense 1..M = N-1. The outgoing
/// arc list of each vertex preserves the global arc order, which fixes the
/// order of children everywhere (pre-order traversals, block layouts,
/// Schur-complement block indices).
class DirectedTree {
 public:
  DirectedTree(int vertex_count, std::vector<Arc> arcs, int root,
               std::vector<int> parent, std::vector<int> incoming_arc,
               std::vector<std::vector<int>> out_arcs, std::vector<int> preorder,
               std::vector<int> preorder_rank)
      : vertex_count_(vertex_count),
        arcs_(std::move(arcs)),
        root_(root),
        parent_(std::move(parent)),
        incoming_arc_(std::move(incoming_arc)),
        out_arcs_(std::move(out_arcs)),
        preorder_(std::move(preorder)),
        preorder_rank_(std::move(preorder_rank)) {}

  int vertex_count() const { return vertex_count_; }
  int arc_count() const { return static_cast<int>(arcs_.size()); }
  int root() const { return root_; }

  const Arc& arc(int k) const { return arcs_[static_cast<size_t>(k - 1)]; }
  const std::vector<Arc>& arcs() const { return arcs_; }

  /// Parent vertex, or 0 for the root.
  int parent(int i) const { return parent_[static_cast<size_t>(i)]; }
  /// Id of the unique arc entering i, or 0 for the root.
  int incoming_arc(int i) const { return incoming_arc_[static_cast<size_t>(i)]; }
  /// Outgoing arc ids of i, in global arc order.
  const std::vector<int>& out_arcs(int i) const { return out_arcs_[static_cast<size_t>(i)]; }

  bool is_leaf(int i) const { return out_arcs_[static_cast<size_t>(i)].empty(); }
  bool is_inner(int i) const { return !is_leaf(i); }
  int child_count(int i) const { return static_cast<int>(out_arcs_[static_cast<size_t>(i)].size()); }

  std::vector<int> children(int i) const {
    std::vector<int> out;
    out.reserve(out_arcs(i).size());
    for (int k : out_arcs(i)) out.push_back(arc(k).head);
    return out;
  }

  /// Vertices in pre-order: parent before children, children in arc order.
  const std::vector<int>& preorder() const { return preorder_; }
  /// Position of vertex i in the pre-order sequence (0-based).
  int preorder_rank(int i) const { return preorder_rank_[static_cast<size_t>(i)]; }

  void require_vertex(int i, const char* who) const {
    if (i < 1 || i > vertex_count_)
      throw InvalidInputError(std::string(who) + ": unknown vertex id " + std::to_string(i));
  }

 private:
  int vertex_count_;
  std::vector<Arc> arcs_;
  int root_;
  std::vector<int> parent_;
  std::vector<int> incoming_arc_;
  std::vector<std::vector<int>> out_arcs_;
  std::vector<int> preorder_;
  std::vector<int> preorder_rank_;
};

/// Builds a validated tree from (tail, head) pairs. Vertex ids must be dense
/// 1..N; arcs receive ids 1..M in input order. Pass vertex_count = 1 with an
/// empty arc list for the single-vertex tree.
inline DirectedTree build_tree(const std::vector<std::pair<int, int>>& arc_list,
                               int vertex_count = 0) {
  if (arc_list.empty() && vertex_count <= 0)
    throw InvalidInputError("build_tree: empty arc list requires an explicit vertex count");

  int n = vertex_count;
  for (const auto& [tail, head] : arc_list) {
    if (tail < 1 || head < 1)
      throw InvalidInputError("build_tree: vertex ids must be positive");
    n = std::max({n, tail, head});
  }
  const int m = static_cast<int>(arc_list.size());
  if (m != n - 1)
    throw InvalidInputError("build_tree: expected " + std::to_string(n - 1) + " arcs for " +
                            std::to_string(n) + " vertices, got " + std::to_string(m) +
                            " (vertex ids must be dense)");

  std::vector<Arc> arcs;
  arcs.reserve(static_cast<size_t>(m));
  std::vector<int> parent(static_cast<size_t>(n) + 1, 0);
  std::vector<int> incoming(static_cast<size_t>(n) + 1, 0);
  std::vector<std::vector<int>> out(static_cast<size_t>(n) + 1);
  for (int k = 1; k <= m; ++k) {
    const auto& [tail, head] = arc_list[static_cast<size_t>(k - 1)];
    if (tail == head)
      throw InvalidInputError("build_tree: cycle detected (self-loop at vertex " +
                              std::to_string(tail) + ")");
    if (incoming[static_cast<size_t>(head)] != 0)
      throw InvalidInputError("build_tree: vertex " + std::to_string(head) +
                              " has two incoming arcs");
    arcs.push_back(Arc{k, tail, head});
    parent[static_cast<size_t>(head)] = tail;
    incoming[static_cast<size_t>(head)] = k;
    out[static_cast<size_t>(tail)].push_back(k);
  }

  int root = 0;
  for (int i = 1; i <= n; ++i) {
    if (incoming[static_cast<size_t>(i)] == 0) {
      if (root != 0)
        throw InvalidInputError("build_tree: multiple roots (vertices " + std::to_string(root) +
                                " and " + std::to_string(i) + " have no incoming arc)");
      root = i;
    }
  }
  if (root == 0) throw InvalidInputError("build_tree: cycle detected (no root vertex)");

  // Pre-order walk; doubles as the reachability check.
  std::vector<int> preorder;
  preorder.reserve(static_cast<size_t>(n));
  std::vector<int> rank(static_cast<size_t>(n) + 1, -1);
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (rank[static_cast<size_t>(i)] >= 0)
      throw InvalidInputError("build_tree: cycle detected at vertex " + std::to_string(i));
    rank[static_cast<size_t>(i)] = static_cast<int>(preorder.size());
    preorder.push_back(i);
    const auto& ks = out[static_cast<size_t>(i)];
    for (auto it = ks.rbegin(); it != ks.rend(); ++it)
      stack.push_back(arcs[static_cast<size_t>(*it - 1)].head);
  }
  if (static_cast<int>(preorder.size()) != n) {
    for (int i = 1; i <= n; ++i)
      if (rank[static_cast<size_t>(i)] < 0)
        throw InvalidInputError("build_tree: vertex " + std::to_string(i) +
                                " is not reachable from root " + std::to_string(root));
  }

  return DirectedTree(n, std::move(arcs), root, std::move(parent), std::move(incoming),
                      std::move(out), std::move(preorder), std::move(rank));
}

/// Per-vertex depth and height plus the tree height.
///
/// depth(root) = 0 and increases along arcs; height(leaf) = 0 and
/// height(i) = 1 + max over children. The tree height equals both
/// height(root) and the maximum depth.
struct VertexMetrics {
  std::vector<int> depth;   // indexed by vertex id, slot 0 unused
  std::vector<int> height;  // indexed by vertex id, slot 0 unused
  int tree_height = 0;
};

inline VertexMetrics vertex_metrics(const DirectedTree& tree) {
  const int n = tree.vertex_count();
  VertexMetrics mx;
  mx.depth.assign(static_cast<size_t>(n) + 1, 0);
  mx.height.assign(static_cast<size_t>(n) + 1, 0);
  for (int i : tree.preorder()) {
    if (i != tree.root())
      mx.depth[static_cast<size_t>(i)] = mx.depth[static_cast<size_t>(tree.parent(i))] + 1;
  }
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    int h = 0;
    for (int k : tree.out_arcs(*it))
      h = std::max(h, 1 + mx.height[static_cast<size_t>(tree.arc(k).head)]);
    mx.height[static_cast<size_t>(*it)] = h;
  }
  mx.tree_height = mx.height[static_cast<size_t>(tree.root())];
  return mx;
}

/// Vertices of the subtree rooted at i, i first, in pre-order.
inline std::vector<int> subtree_vertices(const DirectedTree& tree, int i) {
  tree.require_vertex(i, "subtree_vertices");
  std::vector<int> out;
  std::vector<int> stack{i};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    out.push_back(v);
    const auto& ks = tree.out_arcs(v);
    for (auto it = ks.rbegin(); it != ks.rend(); ++it) stack.push_back(tree.arc(*it).head);
  }
  return out;
}

/// The subgraph induced by the inner (non-leaf) vertices. Vertices keep
/// their original ids; arcs are referenced by their original arc ids.
struct InnerSubgraph {
  std::vector<int> vertices;  // inner vertex ids in pre-order
  std::vector<int> arc_ids;   // arcs with both endpoints inner
  int height = 0;             // height of the induced subgraph (0 if empty)

  bool empty() const { return vertices.empty(); }
};

inline InnerSubgraph inner_subgraph(const DirectedTree& tree) {
  InnerSubgraph sub;
  for (int i : tree.preorder())
    if (tree.is_inner(i)) sub.vertices.push_back(i);
  for (const Arc& a : tree.arcs())
    if (tree.is_inner(a.tail) && tree.is_inner(a.head)) sub.arc_ids.push_back(a.id);
  if (!sub.vertices.empty()) {
    // Inner vertices form a subtree containing the root, so depths in the
    // induced subgraph coincide with depths in the full tree.
    const VertexMetrics mx = vertex_metrics(tree);
    int h = 0;
    for (int i : sub.vertices) h = std::max(h, mx.depth[static_cast<size_t>(i)]);
    sub.height = h;
  }
  return sub;
}

enum class LevelVariant { top_down, bottom_up, even_odd };

/// A nested family of inner-vertex sets, coarsest first, finishing with the
/// full inner vertex set. The coarsest set is conflict-free (no two members
/// joined by an inner arc). Members are listed in pre-order.
struct LevelFamily {
  LevelVariant variant = LevelVariant::top_down;
  std::vector<std::vector<int>> sets;

  int level_count() const { return static_cast<int>(sets.size()); }
};

/// Builds the level family used by the multi-level methods.
///
///  - top_down:  {depth <= 0} in {depth <= 1} in ... in full inner set;
///               the coarsest set is the root alone.
///  - bottom_up: {depth >= H} in {depth >= H-1} in ... in full inner set,
///               H the inner-subgraph height; the coarsest set holds the
///               deepest inner vertices.
///  - even_odd:  two levels, the coarse one the even-depth inner vertices
///               (contains the root); pass coarse_odd to pick the odd set.
inline LevelFamily level_family(const DirectedTree& tree, LevelVariant variant,
                                bool coarse_odd = false) {
  const InnerSubgraph sub = inner_subgraph(tree);
  if (sub.empty()) throw InvalidInputError("level_family: inner subgraph is empty");
  const VertexMetrics mx = vertex_metrics(tree);
  const int h = sub.height;

  LevelFamily fam;
  fam.variant = variant;
  auto pick = [&](auto&& keep) {
    std::vector<int> set;
    for (int i : sub.vertices)
      if (keep(mx.depth[static_cast<size_t>(i)])) set.push_back(i);
    return set;
  };

  switch (variant) {
    case LevelVariant::top_down:
      for (int k = 0; k <= h; ++k) fam.sets.push_back(pick([&](int d) { return d <= k; }));
      break;
    case LevelVariant::bottom_up:
      for (int k = 0; k <= h; ++k) fam.sets.push_back(pick([&](int d) { return d >= h - k; }));
      break;
    case LevelVariant::even_odd: {
      const int parity = coarse_odd ? 1 : 0;
      std::vector<int> coarse = pick([&](int d) { return d % 2 == parity; });
      if (coarse.empty())
        throw InvalidInputError("level_family: requested even/odd coarse set is empty");
      const bool full = static_cast<int>(coarse.size()) == static_cast<int>(sub.vertices.size());
      fam.sets.push_back(std::move(coarse));
      if (!full) fam.sets.push_back(sub.vertices);
      break;
    }
  }
  return fam;
}

/// Result of contracting the outgoing arcs of an inner vertex: the smaller
/// tree plus the map from old vertex ids to new ones.
struct ContractedTree {
  DirectedTree tree;
  std::vector<int> vertex_map;  // old id -> new id, slot 0 unused
  std::vector<int> arc_map;     // old arc id -> new arc id, 0 for removed arcs
};

/// Merges an inner vertex with all of its children into one vertex by
/// contracting its outgoing arcs. Surviving vertices and arcs are renumbered
/// densely, preserving their relative order.
inline ContractedTree contract_supernode(const DirectedTree& tree, int i) {
  tree.require_vertex(i, "contract_supernode");
  if (tree.is_leaf(i))
    throw InvalidInputError("contract_supernode: vertex " + std::to_string(i) + " is a leaf");

  const int n = tree.vertex_count();
  std::vector<char> merged(static_cast<size_t>(n) + 1, 0);
  for (int k : tree.out_arcs(i)) merged[static_cast<size_t>(tree.arc(k).head)] = 1;

  std::vector<int> vmap(static_cast<size_t>(n) + 1, 0);
  int next = 0;
  for (int v = 1; v <= n; ++v) {
    if (merged[static_cast<size_t>(v)]) continue;
    vmap[static_cast<size_t>(v)] = ++next;
  }
  for (int k : tree.out_arcs(i))
    vmap[static_cast<size_t>(tree.arc(k).head)] = vmap[static_cast<size_t>(i)];

  std::vector<int> amap(static_cast<size_t>(tree.arc_count()) + 1, 0);
  std::vector<std::pair<int, int>> arc_list;
  arc_list.reserve(static_cast<size_t>(tree.arc_count()));
  int next_arc = 0;
  for (const Arc& a : tree.arcs()) {
    if (a.tail == i && merged[static_cast<size_t>(a.head)]) continue;  // contracted
    amap[static_cast<size_t>(a.id)] = ++next_arc;
    arc_list.emplace_back(vmap[static_cast<size_t>(a.tail)], vmap[static_cast<size_t>(a.head)]);
  }

  DirectedTree smaller = build_tree(arc_list, next);
  return ContractedTree{std::move(smaller), std::move(vmap), std::move(amap)};
}

}  // namespace treesaddle
