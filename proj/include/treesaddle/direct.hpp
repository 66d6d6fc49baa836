#pragma once

// The recursive direct method. Subtree Schur complements are assembled
// leaves-to-root without recursing past immediate children; the solve then
// recurses twice into every child subtree, once to form the Schur right-hand
// side and once to finish the solution with the coupling variables known.

#include <string>
#include <utility>
#include <vector>

#include "treesaddle/factor.hpp"
#include "treesaddle/system.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

/// Factorizations of all vertex blocks plus, for every inner vertex i, the
/// dense subtree Schur complement over the coupling variables of the
/// outgoing arcs of i, with its Cholesky factorization.
class NestedSchurSet {
 public:
  NestedSchurSet(const TreeCoupledSystem& sys, SolveCounter* counter);

  const Factorization& vertex_factor(int i) const { return b_fact_[static_cast<size_t>(i)]; }
  bool has_schur(int i) const { return schur_[static_cast<size_t>(i)].size() > 0; }
  const Mat& schur(int i) const { return schur_[static_cast<size_t>(i)]; }
  const Factorization& schur_factor(int i) const { return schur_fact_[static_cast<size_t>(i)]; }
  /// Offset of the block of child arc position l within the Schur matrix of i.
  Index schur_offset(int i, int l) const {
    return schur_offset_[static_cast<size_t>(i)][static_cast<size_t>(l)];
  }

 private:
  // Vertex component of B_{<=j}^{-1} applied to the columns of E_in_{k_j}^T;
  // the returned product E_in Z is the child's contribution to the parent's
  // diagonal Schur block. No recursion past j is needed.
  Mat outgoing_block(const TreeCoupledSystem& sys, int j);

  std::vector<Factorization> b_fact_;
  std::vector<Mat> schur_;
  std::vector<Factorization> schur_fact_;
  std::vector<std::vector<Index>> schur_offset_;
};

inline NestedSchurSet::NestedSchurSet(const TreeCoupledSystem& sys, SolveCounter* counter) {
  const DirectedTree& tree = sys.tree();
  const int n = tree.vertex_count();
  b_fact_.resize(static_cast<size_t>(n) + 1);
  schur_.resize(static_cast<size_t>(n) + 1);
  schur_fact_.resize(static_cast<size_t>(n) + 1);
  schur_offset_.resize(static_cast<size_t>(n) + 1);

  for (int i = 1; i <= n; ++i) {
    b_fact_[static_cast<size_t>(i)] =
        Factorization::make(sys.B(i), FactorKind::lu, "B_" + std::to_string(i));
    b_fact_[static_cast<size_t>(i)].attach_counter(counter, i);
  }

  // Leaves-to-root: reversed pre-order visits children before parents.
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int i = *it;
    if (tree.is_leaf(i)) continue;
    const auto& out = tree.out_arcs(i);
    const int r = static_cast<int>(out.size());

    std::vector<Index>& offs = schur_offset_[static_cast<size_t>(i)];
    offs.assign(static_cast<size_t>(r) + 1, 0);
    for (int l = 0; l < r; ++l)
      offs[static_cast<size_t>(l + 1)] = offs[static_cast<size_t>(l)] + sys.coupling_size(out[static_cast<size_t>(l)]);
    const Index dim = offs[static_cast<size_t>(r)];

    Mat S = Mat::Zero(dim, dim);
    // Z_l = B_i^{-1} E_out_{k_l}^T, one multi-column solve per outgoing arc.
    std::vector<Mat> Z(static_cast<size_t>(r));
    for (int l = 0; l < r; ++l)
      Z[static_cast<size_t>(l)] =
          b_fact_[static_cast<size_t>(i)].solve(Mat(sys.E_out(out[static_cast<size_t>(l)]).transpose()));
    for (int l = 0; l < r; ++l) {
      for (int lp = 0; lp < r; ++lp) {
        S.block(offs[static_cast<size_t>(l)], offs[static_cast<size_t>(lp)],
                sys.coupling_size(out[static_cast<size_t>(l)]),
                sys.coupling_size(out[static_cast<size_t>(lp)]))
            .noalias() += sys.E_out(out[static_cast<size_t>(l)]) * Z[static_cast<size_t>(lp)];
      }
      const int k = out[static_cast<size_t>(l)];
      const int child = tree.arc(k).head;
      const Index lk = sys.coupling_size(k);
      S.block(offs[static_cast<size_t>(l)], offs[static_cast<size_t>(l)], lk, lk).noalias() +=
          outgoing_block(sys, child);
      S.block(offs[static_cast<size_t>(l)], offs[static_cast<size_t>(l)], lk, lk) += sys.D(k);
    }
    S = ((S + Mat(S.transpose())) / 2.0).eval();

    schur_[static_cast<size_t>(i)] = S;
    try {
      schur_fact_[static_cast<size_t>(i)] = Factorization::make(S, FactorKind::cholesky);
    } catch (const NotPositiveDefiniteError&) {
      throw NotPositiveDefiniteError("subtree Schur complement at vertex " + std::to_string(i) +
                                     " is not positive definite");
    }
  }
}

inline Mat NestedSchurSet::outgoing_block(const TreeCoupledSystem& sys, int j) {
  const DirectedTree& tree = sys.tree();
  const int k_in = tree.incoming_arc(j);
  const Mat H = sys.E_in(k_in).transpose();  // n_j x l_{k_j}
  const Factorization& Bj = b_fact_[static_cast<size_t>(j)];
  Mat Zcols = Bj.solve(H);
  if (tree.is_leaf(j)) return Mat(sys.E_in(k_in) * Zcols);

  const auto& out = tree.out_arcs(j);
  const int r = static_cast<int>(out.size());
  const std::vector<Index>& offs = schur_offset_[static_cast<size_t>(j)];
  const Index dim = offs[static_cast<size_t>(r)];

  Mat Xhat(dim, H.cols());
  for (int l = 0; l < r; ++l)
    Xhat.middleRows(offs[static_cast<size_t>(l)], sys.coupling_size(out[static_cast<size_t>(l)]))
        .noalias() = sys.E_out(out[static_cast<size_t>(l)]) * Zcols;
  const Mat Y = schur_fact_[static_cast<size_t>(j)].solve(Xhat);
  Mat rhs = H;
  for (int l = 0; l < r; ++l)
    rhs.noalias() -= sys.E_out(out[static_cast<size_t>(l)]).transpose() *
                     Y.middleRows(offs[static_cast<size_t>(l)],
                                  sys.coupling_size(out[static_cast<size_t>(l)]));
  const Mat X = Bj.solve(rhs);
  return Mat(sys.E_in(k_in) * X);
}

namespace detail {

// Solves the subtree system rooted at i for the right-hand side stored in
// `h` (nested coordinates, local to the subtree slice), overwriting it with
// the solution. Each visit of a leaf costs one vertex-block solve, each
// visit of an inner vertex two.
inline void solve_subtree(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                          const NestedSchurSet& schur, int i, Eigen::Ref<Vec> h) {
  const DirectedTree& tree = sys.tree();
  const Index base = gl.subtree_offset[static_cast<size_t>(i)];
  const Index xi = gl.x_nested[static_cast<size_t>(i)] - base;

  if (tree.is_leaf(i)) {
    h.segment(xi, sys.block_size(i)) =
        schur.vertex_factor(i).solve(Vec(h.segment(xi, sys.block_size(i))));
    return;
  }

  const auto& out = tree.out_arcs(i);
  const int r = static_cast<int>(out.size());
  const Vec xi_hat = schur.vertex_factor(i).solve(Vec(h.segment(xi, sys.block_size(i))));

  const Index sdim = schur.schur(i).rows();
  Vec zhat(sdim);
  for (int l = 0; l < r; ++l) {
    const int k = out[static_cast<size_t>(l)];
    const int child = tree.arc(k).head;
    const Index coff = gl.subtree_offset[static_cast<size_t>(child)] - base;
    const Index clen = gl.subtree_size[static_cast<size_t>(child)];

    // First recursion runs on a copy; the original child slice of h is
    // still needed to assemble the second right-hand side below.
    Vec y_hat = h.segment(coff, clen);
    solve_subtree(sys, gl, schur, child, y_hat);
    const Index cx = gl.x_nested[static_cast<size_t>(child)] -
                     gl.subtree_offset[static_cast<size_t>(child)];
    zhat.segment(schur.schur_offset(i, l), sys.coupling_size(k)).noalias() =
        sys.E_out(k) * xi_hat - sys.E_in(k) * y_hat.segment(cx, sys.block_size(child)) -
        h.segment(gl.y_nested[static_cast<size_t>(k)] - base, sys.coupling_size(k));
  }

  const Vec y = schur.schur_factor(i).solve(zhat);

  Vec xrhs = h.segment(xi, sys.block_size(i));
  for (int l = 0; l < r; ++l) {
    const int k = out[static_cast<size_t>(l)];
    xrhs.noalias() -= sys.E_out(k).transpose() *
                      y.segment(schur.schur_offset(i, l), sys.coupling_size(k));
  }
  h.segment(xi, sys.block_size(i)) = schur.vertex_factor(i).solve(xrhs);

  for (int l = 0; l < r; ++l) {
    const int k = out[static_cast<size_t>(l)];
    const int child = tree.arc(k).head;
    const Index coff = gl.subtree_offset[static_cast<size_t>(child)] - base;
    const Index clen = gl.subtree_size[static_cast<size_t>(child)];
    const Index cx = gl.x_nested[static_cast<size_t>(child)] -
                     gl.subtree_offset[static_cast<size_t>(child)];
    Vec z = h.segment(coff, clen);
    z.segment(cx, sys.block_size(child)).noalias() +=
        sys.E_in(k).transpose() * y.segment(schur.schur_offset(i, l), sys.coupling_size(k));
    solve_subtree(sys, gl, schur, child, z);
    h.segment(coff, clen) = z;
    h.segment(gl.y_nested[static_cast<size_t>(k)] - base, sys.coupling_size(k)) =
        y.segment(schur.schur_offset(i, l), sys.coupling_size(k));
  }
}

}  // namespace detail

/// Computes all subtree Schur complements, leaves-to-root. Every solve
/// against a vertex block is charged to the attached counter.
inline NestedSchurSet compute_arrowhead_schur(const TreeCoupledSystem& sys,
                                              SolveCounter* counter = nullptr) {
  return NestedSchurSet(sys, counter);
}

/// Direct solve of the full system. Takes and returns vectors in the global
/// layout.
inline Vec solve_direct(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                        const NestedSchurSet& schur, const Vec& rhs) {
  if (rhs.size() != gl.total())
    throw InvalidInputError("solve_direct: rhs has length " + std::to_string(rhs.size()) +
                            ", expected " + std::to_string(gl.total()));
  Vec nested = gl.to_nested(rhs);
  detail::solve_subtree(sys, gl, schur, sys.tree().root(), nested);
  return gl.to_global(nested);
}

}  // namespace treesaddle
