#pragma once

// Two-level and multi-level solvers for the vertex-block Schur complement:
// subset-operator transfers between nested level sets, per-level smoothers,
// and V/W/F cycle schedules. A cycle application is a fixed composition of
// linear correction steps, so the operator is linear and its exact transpose
// is the reversed composition with transposed factors.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "treesaddle/tree.hpp"
#include "treesaddle/types.hpp"
#include "treesaddle/vertex_schur.hpp"

namespace treesaddle {

/// Injection between two ordered vertex sets: restriction keeps exactly the
/// blocks of the coarse set in order, prolongation scatters them back.
struct SubsetOperator {
  Index fine_dim = 0;
  Index coarse_dim = 0;
  std::vector<Index> fine_index;  // fine position of each coarse entry

  Vec restrict_vec(const Vec& fine) const {
    Vec out(coarse_dim);
    for (Index j = 0; j < coarse_dim; ++j) out[j] = fine[fine_index[static_cast<size_t>(j)]];
    return out;
  }
  Vec prolong(const Vec& coarse) const {
    Vec out = Vec::Zero(fine_dim);
    for (Index j = 0; j < coarse_dim; ++j) out[fine_index[static_cast<size_t>(j)]] = coarse[j];
    return out;
  }
};

inline SubsetOperator make_subset_operator(const VertexBlockSchur& fine,
                                           const std::vector<int>& coarse_members) {
  SubsetOperator op;
  op.fine_dim = fine.dim();
  for (int v : coarse_members) {
    const int p = fine.position_of(v);
    for (Index j = 0; j < fine.block_size(p); ++j) op.fine_index.push_back(fine.offset(p) + j);
  }
  op.coarse_dim = static_cast<Index>(op.fine_index.size());
  return op;
}

enum class CycleKind { two_level, v, w, f };

inline const char* to_string(CycleKind k) {
  switch (k) {
    case CycleKind::two_level: return "two-level";
    case CycleKind::v: return "v";
    case CycleKind::w: return "w";
    case CycleKind::f: return "f";
  }
  return "?";
}

/// Per-application statistics: how often the correction at each level ran
/// (coarsest level first).
struct CycleStats {
  std::vector<std::int64_t> corrections;
};

/// A multi-level hierarchy over nested inner-vertex sets, coarsest first.
/// Level j holds the restriction of S to its vertex set, the restricted
/// smoother, and the subset operator toward the next finer level. The
/// coarsest matrix is block-diagonal (the coarse set is conflict-free) and
/// solved exactly.
class Hierarchy {
 public:
  Hierarchy(const VertexBlockSchur& S, const DirectedTree& tree, const LevelFamily& family,
            SmootherKind smoother_kind, int pre_smooth = 0, int post_smooth = 1)
      : pre_smooth_(pre_smooth), post_smooth_(post_smooth) {
    if (family.sets.empty()) throw InvalidInputError("Hierarchy: empty level family");
    const int K = family.level_count();
    if (static_cast<int>(family.sets.back().size()) != S.member_count())
      throw InvalidInputError("Hierarchy: finest level must cover all inner vertices");

    // Strict nesting of the vertex sets.
    for (int j = 0; j + 1 < K; ++j) {
      const auto& coarse = family.sets[static_cast<size_t>(j)];
      const auto& fine = family.sets[static_cast<size_t>(j + 1)];
      if (coarse.size() >= fine.size())
        throw InvalidInputError("Hierarchy: level sets must be strictly nested");
      for (int v : coarse)
        if (std::find(fine.begin(), fine.end(), v) == fine.end())
          throw InvalidInputError("Hierarchy: level sets must be nested (vertex " +
                                  std::to_string(v) + " lost)");
    }

    // Conflict-free coarsest set: no inner arc joins two of its members.
    {
      const auto& coarse = family.sets.front();
      std::vector<char> in_set(static_cast<size_t>(tree.vertex_count()) + 1, 0);
      for (int v : coarse) in_set[static_cast<size_t>(v)] = 1;
      for (const Arc& a : tree.arcs())
        if (in_set[static_cast<size_t>(a.tail)] && in_set[static_cast<size_t>(a.head)])
          throw InvalidInputError("Hierarchy: coarsest set is not conflict-free (arc " +
                                  std::to_string(a.id) + ")");
    }

    levels_.reserve(static_cast<size_t>(K));
    for (int j = 0; j < K; ++j) {
      Level lvl;
      lvl.members = family.sets[static_cast<size_t>(j)];
      lvl.S = S.restrict_to(lvl.members);
      levels_.push_back(std::move(lvl));
    }
    for (int j = 0; j + 1 < K; ++j)
      levels_[static_cast<size_t>(j)].to_finer =
          make_subset_operator(levels_[static_cast<size_t>(j + 1)].S,
                               levels_[static_cast<size_t>(j)].members);

    // Exact coarse solve: the conflict-free coarsest matrix is block-diagonal,
    // one Cholesky per block.
    coarse_solve_ = make_block_diagonal_smoother(levels_.front().S);

    for (int j = 1; j < K; ++j) {
      Level& lvl = levels_[static_cast<size_t>(j)];
      lvl.smoother = smoother_kind == SmootherKind::block_diagonal
                         ? make_block_diagonal_smoother(lvl.S)
                         : build_supernode_smoother(lvl.S, lvl.members, tree);
    }
  }

  int level_count() const { return static_cast<int>(levels_.size()); }
  Index dim() const { return levels_.back().S.dim(); }
  const VertexBlockSchur& level_matrix(int j) const { return levels_[static_cast<size_t>(j)].S; }
  const std::vector<int>& level_members(int j) const {
    return levels_[static_cast<size_t>(j)].members;
  }
  const BlockSmoother& level_smoother(int j) const {
    return levels_[static_cast<size_t>(j)].smoother;
  }
  int pre_smooth_steps() const { return pre_smooth_; }
  int post_smooth_steps() const { return post_smooth_; }

  /// One cycle applied to a right-hand side: an approximation of S^{-1} g.
  Vec apply(CycleKind kind, const Vec& g, CycleStats* stats = nullptr) const {
    if (g.size() != dim()) throw InvalidInputError("Hierarchy::apply: dimension mismatch");
    if (stats) stats->corrections.assign(static_cast<size_t>(level_count()), 0);
    return cycle(kind, level_count() - 1, g, false, stats);
  }

  /// Exact transpose of apply for the same cycle kind.
  Vec apply_transpose(CycleKind kind, const Vec& g, CycleStats* stats = nullptr) const {
    if (g.size() != dim()) throw InvalidInputError("Hierarchy::apply_transpose: dimension mismatch");
    if (stats) stats->corrections.assign(static_cast<size_t>(level_count()), 0);
    return cycle(kind, level_count() - 1, g, true, stats);
  }

  /// Dense materialization of the cycle operator (column by column).
  Mat materialize(CycleKind kind) const {
    Mat M(dim(), dim());
    for (Index c = 0; c < dim(); ++c) M.col(c) = apply(kind, Vec(Vec::Unit(dim(), c)));
    return M;
  }

 private:
  struct Level {
    std::vector<int> members;
    VertexBlockSchur S;
    BlockSmoother smoother;   // undefined at level 0 (solved exactly)
    SubsetOperator to_finer;  // undefined at the finest level
  };

  // The level-j cycle is the correction composition
  //   w <- w + T (g - S_j w)
  // over the step sequence [pre-smooths..., corrections..., post-smooths...].
  // Its transpose runs the reversed sequence with transposed steps; all
  // smoothers are symmetric, and a correction transposes into the same
  // correction built on the transposed coarse cycle.
  Vec cycle(CycleKind kind, int j, const Vec& g, bool transposed, CycleStats* stats) const {
    if (stats) ++stats->corrections[static_cast<size_t>(j)];
    if (j == 0) return coarse_solve_.apply(g);

    const Level& lvl = levels_[static_cast<size_t>(j)];

    enum class Step { smooth, correct_same, correct_v };
    std::vector<Step> seq;
    for (int s = 0; s < pre_smooth_; ++s) seq.push_back(Step::smooth);
    switch (kind) {
      case CycleKind::two_level:
      case CycleKind::v:
        seq.push_back(Step::correct_same);
        break;
      case CycleKind::w:
        seq.push_back(Step::correct_same);
        seq.push_back(Step::correct_same);
        break;
      case CycleKind::f:
        seq.push_back(Step::correct_same);
        seq.push_back(Step::correct_v);
        break;
    }
    for (int s = 0; s < post_smooth_; ++s) seq.push_back(Step::smooth);
    if (transposed) std::reverse(seq.begin(), seq.end());

    Vec w = Vec::Zero(g.size());
    bool first = true;
    for (Step step : seq) {
      const Vec r = first ? g : Vec(g - lvl.S.apply(w));
      Vec update;
      switch (step) {
        case Step::smooth:
          update = lvl.smoother.apply(r);
          break;
        case Step::correct_same:
        case Step::correct_v: {
          const CycleKind inner =
              (step == Step::correct_v || kind == CycleKind::two_level) ? CycleKind::v : kind;
          if (kind == CycleKind::two_level) {
            // Straight to the coarsest space, composing the subset maps.
            Vec rc = r;
            for (int lev = j; lev >= 1; --lev)
              rc = levels_[static_cast<size_t>(lev - 1)].to_finer.restrict_vec(rc);
            if (stats) ++stats->corrections[0];
            Vec wc = coarse_solve_.apply(rc);
            for (int lev = 1; lev <= j; ++lev)
              wc = levels_[static_cast<size_t>(lev - 1)].to_finer.prolong(wc);
            update = wc;
          } else {
            const SubsetOperator& P = levels_[static_cast<size_t>(j - 1)].to_finer;
            update = P.prolong(cycle(inner, j - 1, P.restrict_vec(r), transposed, stats));
          }
          break;
        }
      }
      if (first) {
        w = update;
        first = false;
      } else {
        w += update;
      }
    }
    return w;
  }

  std::vector<Level> levels_;
  BlockSmoother coarse_solve_;
  int pre_smooth_ = 0;
  int post_smooth_ = 1;
};

inline Hierarchy build_hierarchy(const VertexBlockSchur& S, const DirectedTree& tree,
                                 const LevelFamily& family, SmootherKind smoother_kind,
                                 int pre_smooth = 0, int post_smooth = 1) {
  return Hierarchy(S, tree, family, smoother_kind, pre_smooth, post_smooth);
}

/// Spectral radius of the iteration matrix I - Psi S, where Psi is one cycle
/// application. Dense analysis, guarded to small problems.
inline double iteration_matrix_radius(const Hierarchy& H, const VertexBlockSchur& S,
                                      CycleKind kind, Index size_guard = 150) {
  if (S.dim() > size_guard)
    throw InvalidInputError("iteration_matrix_radius: problem of order " +
                            std::to_string(S.dim()) + " exceeds the dense-analysis guard " +
                            std::to_string(size_guard));
  const Mat M = Mat::Identity(S.dim(), S.dim()) - H.materialize(kind) * S.to_dense();
  Eigen::EigenSolver<Mat> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace treesaddle
