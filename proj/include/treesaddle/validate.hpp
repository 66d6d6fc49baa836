#pragma once

// Checks of the solvability assumptions: every vertex block invertible, the
// full Schur complement positive definite, and (stricter, needed by the
// Schur-based solvers) every subtree Schur complement positive definite.
// The subtree condition is reported as a warning unless strict checking is
// requested, since the iterative methods often behave well without it.

#include <string>
#include <vector>

#include "treesaddle/direct.hpp"
#include "treesaddle/factor.hpp"
#include "treesaddle/system.hpp"
#include "treesaddle/vertex_schur.hpp"

namespace treesaddle {

struct AssumptionReport {
  bool blocks_invertible = true;
  bool schur_positive_definite = true;
  bool subtree_schur_positive_definite = true;
  std::vector<std::string> messages;

  bool ok(bool strict) const {
    return blocks_invertible && schur_positive_definite &&
           (!strict || subtree_schur_positive_definite);
  }
};

inline AssumptionReport check_assumptions(const TreeCoupledSystem& sys) {
  AssumptionReport rep;
  for (int i = 1; i <= sys.vertex_count(); ++i) {
    try {
      Factorization::make(sys.B(i), FactorKind::lu, "B_" + std::to_string(i));
    } catch (const SingularMatrixError& e) {
      rep.blocks_invertible = false;
      rep.messages.push_back(e.what());
    }
  }
  if (!rep.blocks_invertible) {
    rep.schur_positive_definite = false;
    rep.subtree_schur_positive_definite = false;
    return rep;
  }

  if (sys.arc_count() > 0) {
    try {
      const VertexBlockSchur S = assemble_vertex_schur(sys);
      Factorization::make(S.to_dense(), FactorKind::cholesky, "Schur complement");
    } catch (const Error& e) {
      rep.schur_positive_definite = false;
      rep.messages.push_back(e.what());
    }
    try {
      compute_arrowhead_schur(sys);
    } catch (const Error& e) {
      rep.subtree_schur_positive_definite = false;
      rep.messages.push_back(e.what());
    }
  }
  return rep;
}

}  // namespace treesaddle
