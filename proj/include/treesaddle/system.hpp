#pragma once

// Storage of the tree-coupled saddle-point system
//
//   B_i x_i + sum_{k in out(i)} E_out_k^T y_k - sum_{k in in(i)} E_in_k^T y_k = h_i
//   E_out_k x_tail - E_in_k x_head - D_k y_k = f_k
//
// together with the global block layout, the permutation onto the nested
// arrowhead ordering, matrix assembly, and block-wise products. The system is
// immutable after construction; all products are pure.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "treesaddle/tree.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

struct VertexBlocks {
  Mat B;  // symmetric n_i x n_i
  Vec h;  // length n_i
};

struct ArcBlocks {
  Mat E_out;  // l_k x n_tail
  Mat E_in;   // l_k x n_head
  Mat D;      // symmetric l_k x l_k
  Vec f;      // length l_k
};

namespace detail {
inline void require_symmetric(const Mat& M, const std::string& label) {
  if (M.rows() == 0) return;
  const double scale = M.norm();
  const double asym = (M - M.transpose()).norm();
  if (asym > 1e-12 * (scale > 0 ? scale : 1.0))
    throw InvalidInputError(label + " is not symmetric (relative asymmetry " +
                            std::to_string(scale > 0 ? asym / scale : asym) + ")");
}
}  // namespace detail

/// Per-vertex and per-arc blocks over a directed tree. Validates dimensions
/// and symmetry on construction; blocks within the symmetry tolerance are
/// symmetrized by averaging so later mirroring is exact.
class TreeCoupledSystem {
 public:
  TreeCoupledSystem(DirectedTree tree, std::vector<VertexBlocks> vertices,
                    std::vector<ArcBlocks> arcs)
      : tree_(std::move(tree)), vertex_(std::move(vertices)), arc_(std::move(arcs)) {
    const int n = tree_.vertex_count();
    const int m = tree_.arc_count();
    if (static_cast<int>(vertex_.size()) != n + 1)
      throw InvalidInputError("system: expected " + std::to_string(n) +
                              " vertex blocks (1-based storage)");
    if (static_cast<int>(arc_.size()) != m + 1)
      throw InvalidInputError("system: expected " + std::to_string(m) +
                              " arc blocks (1-based storage)");

    for (int i = 1; i <= n; ++i) {
      auto& vb = vertex_[static_cast<size_t>(i)];
      const std::string label = "B_" + std::to_string(i);
      if (vb.B.rows() != vb.B.cols()) throw InvalidInputError(label + " is not square");
      if (vb.h.size() != vb.B.rows())
        throw InvalidInputError("h_" + std::to_string(i) + " has wrong length");
      detail::require_symmetric(vb.B, label);
      vb.B = ((vb.B + Mat(vb.B.transpose())) / 2.0).eval();
    }
    for (int k = 1; k <= m; ++k) {
      auto& ab = arc_[static_cast<size_t>(k)];
      const Arc& a = tree_.arc(k);
      const Index l = ab.E_out.rows();
      const std::string label = "arc " + std::to_string(k);
      if (ab.E_out.cols() != block_size(a.tail))
        throw InvalidInputError(label + ": E_out has " + std::to_string(ab.E_out.cols()) +
                                " columns, tail block has size " +
                                std::to_string(block_size(a.tail)));
      if (ab.E_in.rows() != l || ab.E_in.cols() != block_size(a.head))
        throw InvalidInputError(label + ": E_in dimensions do not match");
      if (ab.D.rows() != l || ab.D.cols() != l)
        throw InvalidInputError(label + ": D dimensions do not match");
      if (ab.f.size() != l) throw InvalidInputError(label + ": f has wrong length");
      detail::require_symmetric(ab.D, "D_" + std::to_string(k));
      ab.D = ((ab.D + Mat(ab.D.transpose())) / 2.0).eval();
    }
  }

  const DirectedTree& tree() const { return tree_; }
  int vertex_count() const { return tree_.vertex_count(); }
  int arc_count() const { return tree_.arc_count(); }

  const Mat& B(int i) const { return vertex_[static_cast<size_t>(i)].B; }
  const Vec& h(int i) const { return vertex_[static_cast<size_t>(i)].h; }
  const Mat& E_out(int k) const { return arc_[static_cast<size_t>(k)].E_out; }
  const Mat& E_in(int k) const { return arc_[static_cast<size_t>(k)].E_in; }
  const Mat& D(int k) const { return arc_[static_cast<size_t>(k)].D; }
  const Vec& f(int k) const { return arc_[static_cast<size_t>(k)].f; }

  Index block_size(int i) const { return vertex_[static_cast<size_t>(i)].B.rows(); }
  Index coupling_size(int k) const { return arc_[static_cast<size_t>(k)].E_out.rows(); }

  /// Total coupling width of the outgoing arcs of i.
  Index out_coupled(int i) const {
    Index s = 0;
    for (int k : tree_.out_arcs(i)) s += coupling_size(k);
    return s;
  }
  /// Coupling width of the arc entering i (0 for the root).
  Index in_coupled(int i) const {
    const int k = tree_.incoming_arc(i);
    return k == 0 ? 0 : coupling_size(k);
  }
  Index total_coupled(int i) const { return out_coupled(i) + in_coupled(i); }

  /// Right-hand side (h, f) in the global layout.
  Vec rhs() const;

 private:
  DirectedTree tree_;
  std::vector<VertexBlocks> vertex_;  // slot 0 unused
  std::vector<ArcBlocks> arc_;        // slot 0 unused
};

/// Offsets of the global layout (x blocks by vertex id, then y blocks by arc
/// id) and the permutation onto the nested arrowhead ordering, in which each
/// subtree occupies a contiguous slice ordered child subtrees first, then the
/// subtree root's block, then the coupling variables of its outgoing arcs.
struct GlobalLayout {
  std::vector<Index> x_offset;  // per vertex id (slot 0 unused)
  std::vector<Index> y_offset;  // per arc id (slot 0 unused)
  Index n = 0;                  // total primal dimension
  Index m = 0;                  // total coupling dimension

  // perm[p] is the global index of nested position p; inverse_perm inverts it.
  std::vector<Index> perm;
  std::vector<Index> inverse_perm;

  std::vector<Index> subtree_offset;  // per vertex: start of its nested slice
  std::vector<Index> subtree_size;    // per vertex: length of the slice
  std::vector<Index> x_nested;        // per vertex: nested offset of x_i
  std::vector<Index> y_nested;        // per arc: nested offset of y_k

  Index total() const { return n + m; }

  Vec to_nested(const Vec& global) const {
    Vec out(global.size());
    for (Index p = 0; p < global.size(); ++p) out[p] = global[perm[static_cast<size_t>(p)]];
    return out;
  }
  Vec to_global(const Vec& nested) const {
    Vec out(nested.size());
    for (Index p = 0; p < nested.size(); ++p) out[perm[static_cast<size_t>(p)]] = nested[p];
    return out;
  }
};

inline GlobalLayout make_layout(const TreeCoupledSystem& sys) {
  const DirectedTree& tree = sys.tree();
  const int n_v = tree.vertex_count();
  const int n_a = tree.arc_count();

  GlobalLayout gl;
  gl.x_offset.assign(static_cast<size_t>(n_v) + 1, 0);
  gl.y_offset.assign(static_cast<size_t>(n_a) + 1, 0);
  Index pos = 0;
  for (int i = 1; i <= n_v; ++i) {
    gl.x_offset[static_cast<size_t>(i)] = pos;
    pos += sys.block_size(i);
  }
  gl.n = pos;
  for (int k = 1; k <= n_a; ++k) {
    gl.y_offset[static_cast<size_t>(k)] = pos;
    pos += sys.coupling_size(k);
  }
  gl.m = pos - gl.n;

  gl.perm.resize(static_cast<size_t>(pos));
  gl.inverse_perm.resize(static_cast<size_t>(pos));
  gl.subtree_offset.assign(static_cast<size_t>(n_v) + 1, 0);
  gl.subtree_size.assign(static_cast<size_t>(n_v) + 1, 0);
  gl.x_nested.assign(static_cast<size_t>(n_v) + 1, 0);
  gl.y_nested.assign(static_cast<size_t>(n_a) + 1, 0);

  Index cursor = 0;
  auto emit_range = [&](Index global_start, Index len) {
    for (Index j = 0; j < len; ++j) gl.perm[static_cast<size_t>(cursor + j)] = global_start + j;
    cursor += len;
  };
  // x_{<=i} = (x_{<=j_1}, ..., x_{<=j_r}, x_i, y_{j_1}, ..., y_{j_r})
  auto build = [&](auto&& self, int i) -> void {
    gl.subtree_offset[static_cast<size_t>(i)] = cursor;
    for (int k : tree.out_arcs(i)) self(self, tree.arc(k).head);
    gl.x_nested[static_cast<size_t>(i)] = cursor;
    emit_range(gl.x_offset[static_cast<size_t>(i)], sys.block_size(i));
    for (int k : tree.out_arcs(i)) {
      gl.y_nested[static_cast<size_t>(k)] = cursor;
      emit_range(gl.y_offset[static_cast<size_t>(k)], sys.coupling_size(k));
    }
    gl.subtree_size[static_cast<size_t>(i)] =
        cursor - gl.subtree_offset[static_cast<size_t>(i)];
  };
  build(build, tree.root());

  for (Index p = 0; p < pos; ++p) gl.inverse_perm[static_cast<size_t>(gl.perm[static_cast<size_t>(p)])] = p;
  return gl;
}

inline Vec TreeCoupledSystem::rhs() const {
  const GlobalLayout gl = make_layout(*this);
  Vec b(gl.total());
  for (int i = 1; i <= vertex_count(); ++i)
    b.segment(gl.x_offset[static_cast<size_t>(i)], block_size(i)) = h(i);
  for (int k = 1; k <= arc_count(); ++k)
    b.segment(gl.y_offset[static_cast<size_t>(k)], coupling_size(k)) = f(k);
  return b;
}

/// Assembles the global matrix [[B, C^T], [C, -D]] in the global layout.
/// Off-diagonal blocks are mirrored from one value, so the result is
/// symmetric exactly.
inline Eigen::SparseMatrix<double> assemble_global(const TreeCoupledSystem& sys,
                                                   const GlobalLayout& gl) {
  std::vector<Eigen::Triplet<double>> trip;
  const auto add_block = [&](Index r0, Index c0, const Mat& M, double sign, bool mirror) {
    for (Index r = 0; r < M.rows(); ++r)
      for (Index c = 0; c < M.cols(); ++c) {
        const double v = sign * M(r, c);
        if (v == 0.0) continue;
        trip.emplace_back(static_cast<int>(r0 + r), static_cast<int>(c0 + c), v);
        if (mirror) trip.emplace_back(static_cast<int>(c0 + c), static_cast<int>(r0 + r), v);
      }
  };
  for (int i = 1; i <= sys.vertex_count(); ++i)
    add_block(gl.x_offset[static_cast<size_t>(i)], gl.x_offset[static_cast<size_t>(i)], sys.B(i),
              1.0, false);
  for (int k = 1; k <= sys.arc_count(); ++k) {
    const Arc& a = sys.tree().arc(k);
    const Index yk = gl.y_offset[static_cast<size_t>(k)];
    add_block(yk, gl.x_offset[static_cast<size_t>(a.tail)], sys.E_out(k), 1.0, true);
    add_block(yk, gl.x_offset[static_cast<size_t>(a.head)], sys.E_in(k), -1.0, true);
    add_block(yk, yk, sys.D(k), -1.0, false);
  }
  Eigen::SparseMatrix<double> A(static_cast<int>(gl.total()), static_cast<int>(gl.total()));
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Block-wise product with the global matrix; never forms the matrix.
inline Vec apply_system(const TreeCoupledSystem& sys, const GlobalLayout& gl, const Vec& v) {
  if (v.size() != gl.total())
    throw InvalidInputError("apply_system: vector has length " + std::to_string(v.size()) +
                            ", expected " + std::to_string(gl.total()));
  Vec out = Vec::Zero(v.size());
  for (int i = 1; i <= sys.vertex_count(); ++i) {
    const Index xi = gl.x_offset[static_cast<size_t>(i)];
    out.segment(xi, sys.block_size(i)).noalias() = sys.B(i) * v.segment(xi, sys.block_size(i));
  }
  for (int k = 1; k <= sys.arc_count(); ++k) {
    const Arc& a = sys.tree().arc(k);
    const Index yk = gl.y_offset[static_cast<size_t>(k)];
    const Index xt = gl.x_offset[static_cast<size_t>(a.tail)];
    const Index xh = gl.x_offset[static_cast<size_t>(a.head)];
    const Index l = sys.coupling_size(k);
    const auto yv = v.segment(yk, l);
    out.segment(xt, sys.block_size(a.tail)).noalias() += sys.E_out(k).transpose() * yv;
    out.segment(xh, sys.block_size(a.head)).noalias() -= sys.E_in(k).transpose() * yv;
    out.segment(yk, l).noalias() += sys.E_out(k) * v.segment(xt, sys.block_size(a.tail));
    out.segment(yk, l).noalias() -= sys.E_in(k) * v.segment(xh, sys.block_size(a.head));
    out.segment(yk, l).noalias() -= sys.D(k) * yv;
  }
  return out;
}

/// Product with the subtree matrix in nested coordinates. `nested` holds the
/// slice for the subtree rooted at `root` (local indexing starting at the
/// subtree offset).
inline Vec apply_subtree_nested(const TreeCoupledSystem& sys, const GlobalLayout& gl, int root,
                                const Vec& nested) {
  const Index base = gl.subtree_offset[static_cast<size_t>(root)];
  if (nested.size() != gl.subtree_size[static_cast<size_t>(root)])
    throw InvalidInputError("apply_subtree_nested: slice length mismatch");
  Vec out = Vec::Zero(nested.size());
  const DirectedTree& tree = sys.tree();
  for (int i : subtree_vertices(tree, root)) {
    const Index xi = gl.x_nested[static_cast<size_t>(i)] - base;
    out.segment(xi, sys.block_size(i)).noalias() =
        sys.B(i) * nested.segment(xi, sys.block_size(i));
    for (int k : tree.out_arcs(i)) {
      const Arc& a = tree.arc(k);
      const Index yk = gl.y_nested[static_cast<size_t>(k)] - base;
      const Index xh = gl.x_nested[static_cast<size_t>(a.head)] - base;
      const Index l = sys.coupling_size(k);
      const auto yv = nested.segment(yk, l);
      out.segment(xi, sys.block_size(i)).noalias() += sys.E_out(k).transpose() * yv;
      out.segment(xh, sys.block_size(a.head)).noalias() -= sys.E_in(k).transpose() * yv;
      out.segment(yk, l).noalias() += sys.E_out(k) * nested.segment(xi, sys.block_size(i));
      out.segment(yk, l).noalias() -= sys.E_in(k) * nested.segment(xh, sys.block_size(a.head));
      out.segment(yk, l).noalias() -= sys.D(k) * yv;
    }
  }
  return out;
}

/// Residual rhs - A x and its Euclidean norm.
inline std::pair<Vec, double> residual(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                                       const Vec& x, const Vec& rhs) {
  if (x.size() != gl.total() || rhs.size() != gl.total())
    throw InvalidInputError("residual: dimension mismatch");
  Vec r = rhs - apply_system(sys, gl, x);
  return {r, r.norm()};
}

}  // namespace treesaddle
