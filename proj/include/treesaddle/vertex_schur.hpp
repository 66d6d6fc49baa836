#pragma once

// The Schur complement S = C B^{-1} C^T + D of the full system, stored in
// vertex-based blocks: block i collects the coupling variables of the
// outgoing arcs of the inner vertex i, so blocks exist only for inner
// vertices and inner arcs. Also provides the block-diagonal and super-node
// smoothers and the block-Jacobi fixed-point iteration.

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "treesaddle/factor.hpp"
#include "treesaddle/system.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

/// S in vertex-based block storage. Members are the inner vertices in
/// pre-order; block i has size equal to the total outgoing coupling width
/// of i. Off-diagonal blocks are kept for arcs between inner vertices only;
/// the mirrored block is S_{j,i} = S_{i,j}^T.
class VertexBlockSchur {
 public:
  struct OffDiagonal {
    int tail_pos = 0;  // member position of the arc's tail
    int head_pos = 0;  // member position of the arc's head
    Mat block;         // S_{tail, head}
  };

  VertexBlockSchur() = default;
  VertexBlockSchur(std::vector<int> members, std::vector<Index> sizes, std::vector<Mat> diag,
                   std::vector<OffDiagonal> off)
      : members_(std::move(members)),
        sizes_(std::move(sizes)),
        diag_(std::move(diag)),
        off_(std::move(off)) {
    offsets_.assign(members_.size() + 1, 0);
    for (size_t p = 0; p < members_.size(); ++p) offsets_[p + 1] = offsets_[p] + sizes_[p];
  }

  Index dim() const { return offsets_.empty() ? 0 : offsets_.back(); }
  int member_count() const { return static_cast<int>(members_.size()); }
  const std::vector<int>& members() const { return members_; }
  int member_at(int pos) const { return members_[static_cast<size_t>(pos)]; }
  Index block_size(int pos) const { return sizes_[static_cast<size_t>(pos)]; }
  Index offset(int pos) const { return offsets_[static_cast<size_t>(pos)]; }
  const Mat& diagonal_block(int pos) const { return diag_[static_cast<size_t>(pos)]; }
  const std::vector<OffDiagonal>& off_diagonal() const { return off_; }

  int position_of(int vertex) const {
    for (size_t p = 0; p < members_.size(); ++p)
      if (members_[p] == vertex) return static_cast<int>(p);
    throw InvalidInputError("VertexBlockSchur: vertex " + std::to_string(vertex) +
                            " is not an inner vertex of this matrix");
  }

  Vec apply(const Vec& v) const {
    if (v.size() != dim()) throw InvalidInputError("VertexBlockSchur::apply: dimension mismatch");
    Vec out = Vec::Zero(dim());
    for (int p = 0; p < member_count(); ++p)
      out.segment(offset(p), block_size(p)).noalias() =
          diag_[static_cast<size_t>(p)] * v.segment(offset(p), block_size(p));
    for (const OffDiagonal& ob : off_) {
      out.segment(offset(ob.tail_pos), block_size(ob.tail_pos)).noalias() +=
          ob.block * v.segment(offset(ob.head_pos), block_size(ob.head_pos));
      out.segment(offset(ob.head_pos), block_size(ob.head_pos)).noalias() +=
          ob.block.transpose() * v.segment(offset(ob.tail_pos), block_size(ob.tail_pos));
    }
    return out;
  }

  Mat to_dense() const {
    Mat S = Mat::Zero(dim(), dim());
    for (int p = 0; p < member_count(); ++p)
      S.block(offset(p), offset(p), block_size(p), block_size(p)) = diag_[static_cast<size_t>(p)];
    for (const OffDiagonal& ob : off_) {
      S.block(offset(ob.tail_pos), offset(ob.head_pos), block_size(ob.tail_pos),
              block_size(ob.head_pos)) = ob.block;
      S.block(offset(ob.head_pos), offset(ob.tail_pos), block_size(ob.head_pos),
              block_size(ob.tail_pos)) = ob.block.transpose();
    }
    return S;
  }

  /// Restriction to a subset of the members (same relative order): keeps
  /// exactly their diagonal blocks and the off-diagonal blocks with both
  /// endpoints retained.
  VertexBlockSchur restrict_to(const std::vector<int>& member_vertices) const {
    std::vector<int> pos_map(members_.size(), -1);
    std::vector<int> members;
    std::vector<Index> sizes;
    std::vector<Mat> diag;
    members.reserve(member_vertices.size());
    for (int v : member_vertices) {
      const int p = position_of(v);
      pos_map[static_cast<size_t>(p)] = static_cast<int>(members.size());
      members.push_back(v);
      sizes.push_back(block_size(p));
      diag.push_back(diag_[static_cast<size_t>(p)]);
    }
    std::vector<OffDiagonal> off;
    for (const OffDiagonal& ob : off_) {
      const int tp = pos_map[static_cast<size_t>(ob.tail_pos)];
      const int hp = pos_map[static_cast<size_t>(ob.head_pos)];
      if (tp >= 0 && hp >= 0) off.push_back(OffDiagonal{tp, hp, ob.block});
    }
    return VertexBlockSchur(std::move(members), std::move(sizes), std::move(diag),
                            std::move(off));
  }

 private:
  std::vector<int> members_;
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
  std::vector<Mat> diag_;
  std::vector<OffDiagonal> off_;
};

/// Assembles S block by block. Per vertex j this costs one multi-column
/// solve for the outgoing couplings (inner vertices) and one for the
/// incoming coupling (non-root vertices), i.e. at most the total coupling
/// width of j.
inline VertexBlockSchur assemble_vertex_schur(const TreeCoupledSystem& sys,
                                              SolveCounter* counter = nullptr) {
  const DirectedTree& tree = sys.tree();
  const int n_v = tree.vertex_count();
  std::vector<int> members;
  std::vector<int> pos_of(static_cast<size_t>(n_v) + 1, -1);
  for (int i : tree.preorder()) {
    if (tree.is_inner(i)) {
      pos_of[static_cast<size_t>(i)] = static_cast<int>(members.size());
      members.push_back(i);
    }
  }

  std::vector<Index> sizes;
  sizes.reserve(members.size());
  for (int i : members) sizes.push_back(sys.out_coupled(i));

  std::vector<Factorization> fact(static_cast<size_t>(n_v) + 1);
  for (int v = 1; v <= n_v; ++v) {
    fact[static_cast<size_t>(v)] =
        Factorization::make(sys.B(v), FactorKind::lu, "B_" + std::to_string(v));
    fact[static_cast<size_t>(v)].attach_counter(counter, v);
  }

  // Z_i = B_i^{-1} [E_out stacked]^T serves the diagonal block of i and the
  // off-diagonal blocks of i's parent toward i.
  std::vector<Mat> Z(members.size());
  std::vector<Mat> diag(members.size());
  for (size_t p = 0; p < members.size(); ++p) {
    const int i = members[p];
    Mat Eo(sizes[p], sys.block_size(i));
    Index row = 0;
    for (int k : tree.out_arcs(i)) {
      Eo.middleRows(row, sys.coupling_size(k)) = sys.E_out(k);
      row += sys.coupling_size(k);
    }
    Z[p] = fact[static_cast<size_t>(i)].solve(Mat(Eo.transpose()));  // n_i x m_i^out
    diag[p].noalias() = Eo * Z[p];
  }

  std::vector<VertexBlockSchur::OffDiagonal> off;
  for (size_t p = 0; p < members.size(); ++p) {
    const int i = members[p];
    Index row = 0;
    for (int k : tree.out_arcs(i)) {
      const int child = tree.arc(k).head;
      const Index lk = sys.coupling_size(k);
      diag[p].block(row, row, lk, lk) += sys.D(k);
      const Mat W =
          fact[static_cast<size_t>(child)].solve(Mat(sys.E_in(k).transpose()));  // n_c x l_k
      diag[p].block(row, row, lk, lk).noalias() += sys.E_in(k) * W;
      if (tree.is_inner(child)) {
        // -E_in B_child^{-1} E_out^T, reusing the child's solved columns.
        const size_t cp = static_cast<size_t>(pos_of[static_cast<size_t>(child)]);
        Mat full = Mat::Zero(sizes[p], sizes[cp]);
        full.middleRows(row, lk).noalias() = -(sys.E_in(k) * Z[cp]);
        off.push_back(VertexBlockSchur::OffDiagonal{static_cast<int>(p), static_cast<int>(cp),
                                                    std::move(full)});
      }
      row += lk;
    }
  }

  // Exact symmetry of the diagonal blocks.
  for (Mat& Dg : diag) Dg = ((Dg + Mat(Dg.transpose())) / 2.0).eval();

  return VertexBlockSchur(std::move(members), std::move(sizes), std::move(diag), std::move(off));
}

enum class SmootherKind { block_diagonal, super_node };

/// Block smoother for S: groups of member blocks factorized together. The
/// block-diagonal smoother uses singleton groups; the super-node smoother
/// merges selected vertices with their inner children into one factorized
/// block. Symmetric, so the transpose action equals the forward one.
class BlockSmoother {
 public:
  BlockSmoother() = default;

  static BlockSmoother block_diagonal(const VertexBlockSchur& S) {
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<size_t>(S.member_count()));
    for (int p = 0; p < S.member_count(); ++p) groups.push_back({p});
    return BlockSmoother(S, std::move(groups), SmootherKind::block_diagonal);
  }

  SmootherKind kind() const { return kind_; }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  Index dim() const { return dim_; }

  Vec apply(const Vec& r) const {
    if (r.size() != dim_) throw InvalidInputError("BlockSmoother::apply: dimension mismatch");
    Vec out(dim_);
    for (size_t g = 0; g < groups_.size(); ++g) {
      Vec local(group_index_[g].size());
      for (size_t j = 0; j < group_index_[g].size(); ++j) local[static_cast<Index>(j)] = r[group_index_[g][j]];
      local = fact_[g].solve(local);
      for (size_t j = 0; j < group_index_[g].size(); ++j) out[group_index_[g][j]] = local[static_cast<Index>(j)];
    }
    return out;
  }

  Mat to_dense() const {
    Mat G = Mat::Zero(dim_, dim_);
    for (Index c = 0; c < dim_; ++c) G.col(c) = apply(Vec(Vec::Unit(dim_, c)));
    return G;
  }

 private:
  BlockSmoother(const VertexBlockSchur& S, std::vector<std::vector<int>> groups,
                SmootherKind kind)
      : kind_(kind), dim_(S.dim()), groups_(std::move(groups)) {
    const Mat dense = S.to_dense();
    group_index_.resize(groups_.size());
    fact_.resize(groups_.size());
    for (size_t g = 0; g < groups_.size(); ++g) {
      auto& idx = group_index_[g];
      for (int p : groups_[g])
        for (Index j = 0; j < S.block_size(p); ++j) idx.push_back(S.offset(p) + j);
      Mat block(idx.size(), idx.size());
      for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < idx.size(); ++c) block(static_cast<Index>(r), static_cast<Index>(c)) = dense(idx[r], idx[c]);
      std::string label = "smoother group {";
      for (size_t j = 0; j < groups_[g].size(); ++j)
        label += (j ? "," : "") + std::to_string(S.member_at(groups_[g][j]));
      label += "}";
      fact_[g] = Factorization::make(block, FactorKind::cholesky, label);
    }
  }

  friend BlockSmoother build_supernode_smoother(const VertexBlockSchur& S,
                                                const std::vector<int>& level_set,
                                                const DirectedTree& tree);
  friend BlockSmoother build_supernode_smoother_from_groups(
      const VertexBlockSchur& S, const std::vector<std::vector<int>>& vertex_groups,
      const DirectedTree& tree);

  SmootherKind kind_ = SmootherKind::block_diagonal;
  Index dim_ = 0;
  std::vector<std::vector<int>> groups_;       // member positions per group
  std::vector<std::vector<Index>> group_index_;  // flat indices per group
  std::vector<Factorization> fact_;
};

inline BlockSmoother make_block_diagonal_smoother(const VertexBlockSchur& S) {
  return BlockSmoother::block_diagonal(S);
}

/// Super-node smoother over a level set: every vertex of maximum height
/// within the set whose inner children all lie in the set becomes the center
/// of a merged group {center} + inner children (leaf children carry no block
/// and are skipped); remaining vertices stay singletons. Group overlaps are
/// resolved in pre-order, earlier center wins.
inline BlockSmoother build_supernode_smoother(const VertexBlockSchur& S,
                                              const std::vector<int>& level_set,
                                              const DirectedTree& tree) {
  const VertexMetrics mx = vertex_metrics(tree);
  std::vector<char> in_set(static_cast<size_t>(tree.vertex_count()) + 1, 0);
  for (int v : level_set) {
    S.position_of(v);  // validates membership
    in_set[static_cast<size_t>(v)] = 1;
  }

  int max_height = 0;
  for (int v : level_set) max_height = std::max(max_height, mx.height[static_cast<size_t>(v)]);

  std::vector<char> taken(static_cast<size_t>(tree.vertex_count()) + 1, 0);
  std::vector<std::vector<int>> groups;
  // level_set is kept in pre-order by the level family, so scanning it in
  // order implements the pre-order tie-break.
  for (int v : level_set) {
    if (mx.height[static_cast<size_t>(v)] != max_height) continue;
    if (taken[static_cast<size_t>(v)]) continue;
    bool eligible = true;
    std::vector<int> group{v};
    for (int child : tree.children(v)) {
      if (tree.is_leaf(child)) continue;  // no block in S
      if (!in_set[static_cast<size_t>(child)] || taken[static_cast<size_t>(child)]) {
        eligible = false;
        break;
      }
      group.push_back(child);
    }
    if (!eligible) continue;
    for (int g : group) taken[static_cast<size_t>(g)] = 1;
    groups.push_back(std::move(group));
  }
  for (int v : level_set)
    if (!taken[static_cast<size_t>(v)]) groups.push_back({v});

  std::vector<std::vector<int>> position_groups;
  position_groups.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<int> pg;
    pg.reserve(g.size());
    for (int v : g) pg.push_back(S.position_of(v));
    position_groups.push_back(std::move(pg));
  }
  return BlockSmoother(S, std::move(position_groups), SmootherKind::super_node);
}

/// Super-node smoother from explicitly requested merge groups. Every group
/// must be a vertex together with a subset of its inner children, and groups
/// must be pairwise disjoint; otherwise the request is rejected.
inline BlockSmoother build_supernode_smoother_from_groups(
    const VertexBlockSchur& S, const std::vector<std::vector<int>>& vertex_groups,
    const DirectedTree& tree) {
  std::vector<char> taken(static_cast<size_t>(tree.vertex_count()) + 1, 0);
  std::vector<std::vector<int>> position_groups;
  for (const auto& g : vertex_groups) {
    if (g.empty()) throw InvalidInputError("super-node group must not be empty");
    const int center = g.front();
    std::vector<int> pg{S.position_of(center)};
    for (size_t j = 1; j < g.size(); ++j) {
      if (tree.parent(g[j]) != center || tree.is_leaf(g[j]))
        throw InvalidInputError("super-node group member " + std::to_string(g[j]) +
                                " is not an inner child of center " + std::to_string(center));
      pg.push_back(S.position_of(g[j]));
    }
    for (int v : g) {
      if (taken[static_cast<size_t>(v)])
        throw InvalidInputError("super-node groups overlap at vertex " + std::to_string(v));
      taken[static_cast<size_t>(v)] = 1;
    }
    position_groups.push_back(std::move(pg));
  }
  for (int p = 0; p < S.member_count(); ++p)
    if (!taken[static_cast<size_t>(S.member_at(p))]) position_groups.push_back({p});
  return BlockSmoother(S, std::move(position_groups), SmootherKind::super_node);
}

/// k sweeps of the fixed-point iteration
///   y <- y + G (rhs - S y)
/// with the given smoother G in place of the exact inverse. Linear in
/// (rhs, y0).
inline Vec block_jacobi(const VertexBlockSchur& S, const BlockSmoother& smoother, const Vec& rhs,
                        const Vec& y0, int sweeps) {
  if (rhs.size() != S.dim() || y0.size() != S.dim())
    throw InvalidInputError("block_jacobi: dimension mismatch");
  Vec y = y0;
  for (int s = 0; s < sweeps; ++s) y += smoother.apply(Vec(rhs - S.apply(y)));
  return y;
}

}  // namespace treesaddle
