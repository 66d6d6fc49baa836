#pragma once

// The preconditioner suite. The nested kinds (block-diagonal, hook, exact)
// act in the nested arrowhead ordering and are conjugated by the layout
// permutation, so callers always pass and receive vectors in the global
// ordering. Every kind is a fixed linear map with an exact transpose
// application, as required for right-preconditioned (non-flexible) GMRES.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "treesaddle/direct.hpp"
#include "treesaddle/factor.hpp"
#include "treesaddle/multilevel.hpp"
#include "treesaddle/system.hpp"
#include "treesaddle/types.hpp"
#include "treesaddle/vertex_schur.hpp"

namespace treesaddle {

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual Vec apply(const Vec& v) const = 0;            // P^{-1} v
  virtual Vec apply_transpose(const Vec& v) const = 0;  // P^{-T} v
  virtual std::string name() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
 public:
  Vec apply(const Vec& v) const override { return v; }
  Vec apply_transpose(const Vec& v) const override { return v; }
  std::string name() const override { return "none"; }
};

/// Block-diagonal preconditioner: B_i on the primal blocks, -D_k on the
/// coupling blocks. Requires every D_k to be invertible, which is checked at
/// construction.
class NestedBlockDiagPreconditioner final : public Preconditioner {
 public:
  NestedBlockDiagPreconditioner(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                                SolveCounter* counter = nullptr)
      : sys_(sys), gl_(gl) {
    b_fact_.resize(static_cast<size_t>(sys.vertex_count()) + 1);
    for (int i = 1; i <= sys.vertex_count(); ++i) {
      b_fact_[static_cast<size_t>(i)] =
          Factorization::make(sys.B(i), FactorKind::lu, "B_" + std::to_string(i));
      b_fact_[static_cast<size_t>(i)].attach_counter(counter, i);
    }
    d_fact_.resize(static_cast<size_t>(sys.arc_count()) + 1);
    for (int k = 1; k <= sys.arc_count(); ++k) {
      try {
        d_fact_[static_cast<size_t>(k)] =
            Factorization::make(sys.D(k), FactorKind::lu, "D_" + std::to_string(k));
      } catch (const SingularMatrixError&) {
        throw SingularMatrixError("block-diagonal preconditioner requires invertible D_k; D_" +
                                  std::to_string(k) + " is singular");
      }
    }
  }

  Vec apply(const Vec& v) const override { return apply_impl(v, false); }
  Vec apply_transpose(const Vec& v) const override { return apply_impl(v, true); }
  std::string name() const override { return "nested-bdiag"; }

 private:
  Vec apply_impl(const Vec& v, bool transpose) const {
    if (v.size() != gl_.total())
      throw InvalidInputError("nested-bdiag: dimension mismatch");
    Vec out(v.size());
    for (int i = 1; i <= sys_.vertex_count(); ++i) {
      const auto seg = v.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i));
      out.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i)) =
          transpose ? b_fact_[static_cast<size_t>(i)].solve_transpose(Vec(seg))
                    : b_fact_[static_cast<size_t>(i)].solve(Vec(seg));
    }
    for (int k = 1; k <= sys_.arc_count(); ++k) {
      const auto seg = v.segment(gl_.y_offset[static_cast<size_t>(k)], sys_.coupling_size(k));
      out.segment(gl_.y_offset[static_cast<size_t>(k)], sys_.coupling_size(k)) =
          transpose ? Vec(-d_fact_[static_cast<size_t>(k)].solve_transpose(Vec(seg)))
                    : Vec(-d_fact_[static_cast<size_t>(k)].solve(Vec(seg)));
    }
    return out;
  }

  const TreeCoupledSystem& sys_;
  const GlobalLayout& gl_;
  std::vector<Factorization> b_fact_;
  std::vector<Factorization> d_fact_;
};

namespace detail {

/// Shared recursions of the hook and exact preconditioners. All routines
/// operate in place on a full-length nested vector, touching only the slice
/// of the subtree they are called on.
class NestedApplicator {
 public:
  NestedApplicator(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                   std::shared_ptr<const NestedSchurSet> schur)
      : sys_(sys), gl_(gl), schur_(std::move(schur)) {}

  // P_hook^{-1}: children first, one vertex-block solve, then the Schur
  // solve for the coupling variables of this vertex.
  void hook(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, false);
      return;
    }
    for (int k : tree.out_arcs(i)) hook(tree.arc(k).head, w);
    solve_x(i, w, false);
    schur_step(i, w);
  }

  void hook_transpose(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, true);
      return;
    }
    const Vec zy = transpose_coupling(i, w);
    solve_x(i, w, true);
    for (int k : tree.out_arcs(i)) hook_transpose(tree.arc(k).head, w);
    store_coupling(i, zy, w);
  }

  // P_exact^{-1} h = (2 I - P_rec^{-1} B) P_rec^{-1} h with exact children.
  void exact(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, false);
      return;
    }
    const Index off = gl_.subtree_offset[static_cast<size_t>(i)];
    const Index len = gl_.subtree_size[static_cast<size_t>(i)];
    recursive(i, w);
    const Vec u = w.segment(off, len);
    w.segment(off, len) = apply_subtree_nested(sys_, gl_, i, u);
    recursive(i, w);
    w.segment(off, len) = 2.0 * u - w.segment(off, len);
  }

  void exact_transpose(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, true);
      return;
    }
    const Index off = gl_.subtree_offset[static_cast<size_t>(i)];
    const Index len = gl_.subtree_size[static_cast<size_t>(i)];
    const Vec h = w.segment(off, len);
    recursive_transpose(i, w);
    const Vec t = w.segment(off, len);
    w.segment(off, len) = 2.0 * h - apply_subtree_nested(sys_, gl_, i, t);
    recursive_transpose(i, w);
  }

  // One application of the recursive preconditioner with exact children.
  void recursive(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, false);
      return;
    }
    for (int k : tree.out_arcs(i)) exact(tree.arc(k).head, w);
    solve_x(i, w, false);
    schur_step(i, w);
  }

  void recursive_transpose(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    if (tree.is_leaf(i)) {
      solve_x(i, w, true);
      return;
    }
    const Vec zy = transpose_coupling(i, w);
    solve_x(i, w, true);
    for (int k : tree.out_arcs(i)) exact_transpose(tree.arc(k).head, w);
    store_coupling(i, zy, w);
  }

  const NestedSchurSet& schur_set() const { return *schur_; }

 private:
  void solve_x(int i, Vec& w, bool transpose) const {
    const Index xi = gl_.x_nested[static_cast<size_t>(i)];
    const Vec seg = w.segment(xi, sys_.block_size(i));
    w.segment(xi, sys_.block_size(i)) = transpose
                                            ? schur_->vertex_factor(i).solve_transpose(seg)
                                            : schur_->vertex_factor(i).solve(seg);
  }

  // y <- S_i^{-1} (C^+ x_i - C^- x_children - f), the trailing rows of the
  // forward triangular solve. Assumes x parts of w already hold solutions.
  void schur_step(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    const auto& out = tree.out_arcs(i);
    Vec zhat(schur_->schur(i).rows());
    for (size_t l = 0; l < out.size(); ++l) {
      const int k = out[l];
      const int child = tree.arc(k).head;
      zhat.segment(schur_->schur_offset(i, static_cast<int>(l)), sys_.coupling_size(k))
          .noalias() =
          sys_.E_out(k) *
              w.segment(gl_.x_nested[static_cast<size_t>(i)], sys_.block_size(i)) -
          sys_.E_in(k) *
              w.segment(gl_.x_nested[static_cast<size_t>(child)], sys_.block_size(child)) -
          w.segment(gl_.y_nested[static_cast<size_t>(k)], sys_.coupling_size(k));
    }
    const Vec y = schur_->schur_factor(i).solve(zhat);
    store_coupling(i, y, w);
  }

  // z_y = -S_i^{-1} v_y for the transposed triangular solve, with the x
  // right-hand sides updated in place: x_child += E_in^T z, x_i -= E_out^T z.
  Vec transpose_coupling(int i, Vec& w) const {
    const DirectedTree& tree = sys_.tree();
    const auto& out = tree.out_arcs(i);
    Vec vy(schur_->schur(i).rows());
    for (size_t l = 0; l < out.size(); ++l) {
      const int k = out[l];
      vy.segment(schur_->schur_offset(i, static_cast<int>(l)), sys_.coupling_size(k)) =
          w.segment(gl_.y_nested[static_cast<size_t>(k)], sys_.coupling_size(k));
    }
    const Vec zy = -schur_->schur_factor(i).solve(vy);
    for (size_t l = 0; l < out.size(); ++l) {
      const int k = out[l];
      const int child = tree.arc(k).head;
      const auto zl =
          zy.segment(schur_->schur_offset(i, static_cast<int>(l)), sys_.coupling_size(k));
      w.segment(gl_.x_nested[static_cast<size_t>(child)], sys_.block_size(child)).noalias() +=
          sys_.E_in(k).transpose() * zl;
      w.segment(gl_.x_nested[static_cast<size_t>(i)], sys_.block_size(i)).noalias() -=
          sys_.E_out(k).transpose() * zl;
    }
    return zy;
  }

  void store_coupling(int i, const Vec& y, Vec& w) const {
    const auto& out = sys_.tree().out_arcs(i);
    for (size_t l = 0; l < out.size(); ++l) {
      const int k = out[l];
      w.segment(gl_.y_nested[static_cast<size_t>(k)], sys_.coupling_size(k)) =
          y.segment(schur_->schur_offset(i, static_cast<int>(l)), sys_.coupling_size(k));
    }
  }

  const TreeCoupledSystem& sys_;
  const GlobalLayout& gl_;
  std::shared_ptr<const NestedSchurSet> schur_;
};

}  // namespace detail

/// Hook preconditioner: keeps the coupling rows and replaces the trailing
/// block by the negated subtree Schur complement. One vertex-block solve per
/// vertex per application; exact on trees of height at most one.
class HookPreconditioner final : public Preconditioner {
 public:
  HookPreconditioner(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                     std::shared_ptr<const NestedSchurSet> schur)
      : gl_(gl), applicator_(sys, gl, std::move(schur)), root_(sys.tree().root()) {}

  Vec apply(const Vec& v) const override {
    Vec w = gl_.to_nested(v);
    applicator_.hook(root_, w);
    return gl_.to_global(w);
  }
  Vec apply_transpose(const Vec& v) const override {
    Vec w = gl_.to_nested(v);
    applicator_.hook_transpose(root_, w);
    return gl_.to_global(w);
  }
  std::string name() const override { return "hook"; }

 private:
  const GlobalLayout& gl_;
  detail::NestedApplicator applicator_;
  int root_;
};

/// The exact polynomial preconditioner, built bottom-up so that its inverse
/// reproduces the subtree solves. Two evaluation paths compute the same
/// operator: the closed polynomial form and two steps of the fixed-point
/// iteration from a zero initial guess.
enum class ExactEvaluation { polynomial, fixed_point };

class ExactPreconditioner final : public Preconditioner {
 public:
  ExactPreconditioner(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                      std::shared_ptr<const NestedSchurSet> schur,
                      ExactEvaluation eval = ExactEvaluation::polynomial)
      : sys_(sys), gl_(gl), applicator_(sys, gl, std::move(schur)), eval_(eval),
        root_(sys.tree().root()) {}

  Vec apply(const Vec& v) const override {
    Vec w = gl_.to_nested(v);
    if (eval_ == ExactEvaluation::polynomial) {
      applicator_.exact(root_, w);
    } else {
      // x2 = x1 + P_rec^{-1}(h - B x1) with x1 = P_rec^{-1} h.
      const Vec h = w;
      applicator_.recursive(root_, w);
      Vec r = h - apply_subtree_nested(sys_, gl_, root_, w);
      applicator_.recursive(root_, r);
      w += r;
    }
    return gl_.to_global(w);
  }

  Vec apply_transpose(const Vec& v) const override {
    Vec w = gl_.to_nested(v);
    if (eval_ == ExactEvaluation::polynomial) {
      applicator_.exact_transpose(root_, w);
    } else {
      const Vec h = w;
      applicator_.recursive_transpose(root_, w);
      Vec r = h - apply_subtree_nested(sys_, gl_, root_, w);
      applicator_.recursive_transpose(root_, r);
      w += r;
    }
    return gl_.to_global(w);
  }

  std::string name() const override {
    return eval_ == ExactEvaluation::polynomial ? "exact" : "recursive";
  }

 private:
  const TreeCoupledSystem& sys_;
  const GlobalLayout& gl_;
  detail::NestedApplicator applicator_;
  ExactEvaluation eval_;
  int root_;
};

/// Fixed-point iteration on the subtree rooted at `i`,
///   x^{(k+1)} = x^{(k)} + P_rec^{-1} (rhs - B x^{(k)}),
/// with the recursive preconditioner using exact child solves. Vectors are
/// slices in nested subtree coordinates. With exact children the second
/// iterate is the solution regardless of the initial guess.
inline Vec recursive_fixed_point(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                                 std::shared_ptr<const NestedSchurSet> schur, int i,
                                 const Vec& rhs, const Vec& x0, int iterations) {
  const Index off = gl.subtree_offset[static_cast<size_t>(i)];
  const Index len = gl.subtree_size[static_cast<size_t>(i)];
  if (rhs.size() != len || x0.size() != len)
    throw InvalidInputError("recursive_fixed_point: slice length mismatch");
  detail::NestedApplicator app(sys, gl, std::move(schur));
  Vec work = Vec::Zero(gl.total());
  Vec x = x0;
  for (int it = 0; it < iterations; ++it) {
    work.segment(off, len) = rhs - apply_subtree_nested(sys, gl, i, x);
    app.recursive(i, work);
    x += work.segment(off, len);
  }
  return x;
}

/// Inner solver policy for the block-triangular preconditioner built on the
/// non-nested Schur complement.
struct NonnestedPolicy {
  enum class Kind { exact_cholesky, jacobi_sweeps, ml_cycles };
  Kind kind = Kind::exact_cholesky;
  int sweeps = 1;  // jacobi_sweeps
  SmootherKind smoother = SmootherKind::block_diagonal;
  int cycles = 1;  // ml_cycles
  CycleKind cycle = CycleKind::v;
  LevelVariant hierarchy = LevelVariant::top_down;
  int pre_smooth = 0;
  int post_smooth = 1;

  static NonnestedPolicy exact() { return NonnestedPolicy{}; }
  static NonnestedPolicy jacobi(int sweeps, SmootherKind smoother = SmootherKind::block_diagonal) {
    NonnestedPolicy p;
    p.kind = Kind::jacobi_sweeps;
    p.sweeps = sweeps;
    p.smoother = smoother;
    return p;
  }
  static NonnestedPolicy ml(int cycles, CycleKind cycle, LevelVariant hierarchy,
                            SmootherKind smoother, int pre_smooth = 0, int post_smooth = 1) {
    NonnestedPolicy p;
    p.kind = Kind::ml_cycles;
    p.cycles = cycles;
    p.cycle = cycle;
    p.hierarchy = hierarchy;
    p.smoother = smoother;
    p.pre_smooth = pre_smooth;
    p.post_smooth = post_smooth;
    return p;
  }
};

/// Block-triangular preconditioner P = [[B, 0], [C, S]]. Applying the
/// inverse solves the primal blocks, forms the coupling residual, and solves
/// S by the configured policy: exact Cholesky, a fixed number of smoother
/// sweeps from zero, or a fixed number of multi-level cycles from zero. All
/// policies stay linear, and the transpose reverses each step exactly.
class NonnestedTriangularPreconditioner final : public Preconditioner {
 public:
  NonnestedTriangularPreconditioner(const TreeCoupledSystem& sys, const GlobalLayout& gl,
                                    NonnestedPolicy policy, SolveCounter* counter = nullptr)
      : sys_(sys), gl_(gl), policy_(policy) {
    b_fact_.resize(static_cast<size_t>(sys.vertex_count()) + 1);
    for (int i = 1; i <= sys.vertex_count(); ++i) {
      b_fact_[static_cast<size_t>(i)] =
          Factorization::make(sys.B(i), FactorKind::lu, "B_" + std::to_string(i));
      b_fact_[static_cast<size_t>(i)].attach_counter(counter, i);
    }
    if (gl.m == 0) return;  // no coupling variables, the primal solve is all
    S_ = assemble_vertex_schur(sys, counter);
    ss_index_.reserve(static_cast<size_t>(S_.dim()));
    for (int p = 0; p < S_.member_count(); ++p)
      for (int k : sys.tree().out_arcs(S_.member_at(p)))
        for (Index j = 0; j < sys.coupling_size(k); ++j)
          ss_index_.push_back(gl.y_offset[static_cast<size_t>(k)] + j);

    switch (policy_.kind) {
      case NonnestedPolicy::Kind::exact_cholesky:
        s_chol_ = Factorization::make(S_.to_dense(), FactorKind::cholesky,
                                      "non-nested Schur complement");
        break;
      case NonnestedPolicy::Kind::jacobi_sweeps:
        smoother_ = policy_.smoother == SmootherKind::block_diagonal
                        ? make_block_diagonal_smoother(S_)
                        : build_supernode_smoother(S_, S_.members(), sys.tree());
        break;
      case NonnestedPolicy::Kind::ml_cycles: {
        const LevelFamily family = level_family(sys.tree(), policy_.hierarchy);
        hierarchy_ = std::make_unique<Hierarchy>(S_, sys.tree(), family, policy_.smoother,
                                                 policy_.pre_smooth, policy_.post_smooth);
        break;
      }
    }
  }

  Vec apply(const Vec& v) const override {
    if (v.size() != gl_.total()) throw InvalidInputError("nonnested: dimension mismatch");
    Vec out(v.size());
    for (int i = 1; i <= sys_.vertex_count(); ++i)
      out.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i)) =
          b_fact_[static_cast<size_t>(i)].solve(
              Vec(v.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i))));
    if (gl_.m == 0) return out;
    Vec fx(gl_.m);
    for (int k = 1; k <= sys_.arc_count(); ++k) {
      const Arc& a = sys_.tree().arc(k);
      fx.segment(gl_.y_offset[static_cast<size_t>(k)] - gl_.n, sys_.coupling_size(k)) =
          v.segment(gl_.y_offset[static_cast<size_t>(k)], sys_.coupling_size(k)) -
          sys_.E_out(k) *
              out.segment(gl_.x_offset[static_cast<size_t>(a.tail)], sys_.block_size(a.tail)) +
          sys_.E_in(k) *
              out.segment(gl_.x_offset[static_cast<size_t>(a.head)], sys_.block_size(a.head));
    }
    const Vec ys = solve_schur(gather(fx), false);
    scatter(ys, out);
    return out;
  }

  Vec apply_transpose(const Vec& v) const override {
    if (v.size() != gl_.total()) throw InvalidInputError("nonnested: dimension mismatch");
    Vec out = Vec::Zero(v.size());
    if (gl_.m > 0) {
      Vec fy(gl_.m);
      for (int k = 1; k <= sys_.arc_count(); ++k)
        fy.segment(gl_.y_offset[static_cast<size_t>(k)] - gl_.n, sys_.coupling_size(k)) =
            v.segment(gl_.y_offset[static_cast<size_t>(k)], sys_.coupling_size(k));
      const Vec ys = solve_schur(gather(fy), true);
      scatter(ys, out);
    }
    for (int i = 1; i <= sys_.vertex_count(); ++i) {
      Vec rhs = v.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i));
      for (int k : sys_.tree().out_arcs(i))
        rhs.noalias() -= sys_.E_out(k).transpose() *
                         out.segment(gl_.y_offset[static_cast<size_t>(k)], sys_.coupling_size(k));
      const int k_in = sys_.tree().incoming_arc(i);
      if (k_in != 0)
        rhs.noalias() += sys_.E_in(k_in).transpose() *
                         out.segment(gl_.y_offset[static_cast<size_t>(k_in)],
                                     sys_.coupling_size(k_in));
      out.segment(gl_.x_offset[static_cast<size_t>(i)], sys_.block_size(i)) =
          b_fact_[static_cast<size_t>(i)].solve_transpose(rhs);
    }
    return out;
  }

  std::string name() const override {
    switch (policy_.kind) {
      case NonnestedPolicy::Kind::exact_cholesky: return "nonnested-exact";
      case NonnestedPolicy::Kind::jacobi_sweeps: return "nonnested-bdiag";
      case NonnestedPolicy::Kind::ml_cycles:
        return std::string("ml-") + to_string(policy_.cycle);
    }
    return "nonnested";
  }

  const VertexBlockSchur& schur() const { return S_; }
  const Hierarchy* hierarchy() const { return hierarchy_.get(); }

 private:
  Vec gather(const Vec& y_global_part) const {
    Vec s(static_cast<Index>(ss_index_.size()));
    for (size_t j = 0; j < ss_index_.size(); ++j)
      s[static_cast<Index>(j)] = y_global_part[ss_index_[j] - gl_.n];
    return s;
  }
  void scatter(const Vec& s, Vec& out_global) const {
    for (size_t j = 0; j < ss_index_.size(); ++j)
      out_global[ss_index_[j]] = s[static_cast<Index>(j)];
  }

  Vec solve_schur(const Vec& fx, bool transpose) const {
    switch (policy_.kind) {
      case NonnestedPolicy::Kind::exact_cholesky:
        return s_chol_.solve(fx);
      case NonnestedPolicy::Kind::jacobi_sweeps:
        // Symmetric smoother and matrix: the sweep operator is symmetric.
        return block_jacobi(S_, smoother_, fx, Vec(Vec::Zero(fx.size())), policy_.sweeps);
      case NonnestedPolicy::Kind::ml_cycles: {
        Vec y = Vec::Zero(fx.size());
        for (int c = 0; c < policy_.cycles; ++c) {
          const Vec r = fx - S_.apply(y);
          y += transpose ? hierarchy_->apply_transpose(policy_.cycle, r)
                         : hierarchy_->apply(policy_.cycle, r);
        }
        return y;
      }
    }
    throw Error("unreachable");
  }

  const TreeCoupledSystem& sys_;
  const GlobalLayout& gl_;
  NonnestedPolicy policy_;
  std::vector<Factorization> b_fact_;
  VertexBlockSchur S_;
  std::vector<Index> ss_index_;  // global index of each Schur-space coordinate
  Factorization s_chol_;
  BlockSmoother smoother_;
  std::unique_ptr<Hierarchy> hierarchy_;
};

}  // namespace treesaddle
