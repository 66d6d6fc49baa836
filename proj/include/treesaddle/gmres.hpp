#pragma once

// Right-preconditioned GMRES without restarts. The driver iterates on
// A P^{-T} and recovers the solution through one more transpose application,
// so the Arnoldi residual estimates coincide with the residuals of the
// original system; the final true residual is recomputed and reported.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "treesaddle/factor.hpp"
#include "treesaddle/precond.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

struct SolveReport {
  int iterations = 0;
  std::vector<double> relative_residuals;  // entry k is r_k / ||r_0||, entry 0 is 1
  bool converged = false;
  bool breakdown = false;
  Vec solution;
  double true_relative_residual = 0.0;
  // Counter snapshot at the end of the solve, split by phase.
  std::int64_t setup_solves = 0;
  std::int64_t apply_solves = 0;

  std::int64_t total_solves() const { return setup_solves + apply_solves; }
};

using LinearMap = std::function<Vec(const Vec&)>;

inline LinearMap make_system_operator(const TreeCoupledSystem& sys, const GlobalLayout& gl) {
  return [&sys, &gl](const Vec& v) { return apply_system(sys, gl, v); };
}

/// Full (unrestarted) GMRES with modified Gram-Schmidt Arnoldi and a single
/// reorthogonalization pass when cancellation eats more than eight digits of
/// the candidate vector. Zero initial guess; stops once the relative
/// residual drops to `tol` or after `max_iter` iterations.
inline SolveReport gmres(const LinearMap& apply_A, const Preconditioner* precond, const Vec& b,
                         double tol = 1e-8, int max_iter = 100,
                         SolveCounter* counter = nullptr) {
  PhaseScope phase(counter, SolvePhase::apply);
  const auto precondition = [&](const Vec& v) {
    return precond ? precond->apply_transpose(v) : v;
  };

  SolveReport report;
  const double beta = b.norm();
  report.relative_residuals.push_back(1.0);
  if (beta == 0.0) {
    report.solution = Vec::Zero(b.size());
    report.converged = true;
    report.true_relative_residual = 0.0;
    if (counter) {
      report.setup_solves = counter->total(SolvePhase::setup);
      report.apply_solves = counter->total(SolvePhase::apply);
    }
    return report;
  }
  if (!b.allFinite()) throw Error("gmres: right-hand side contains non-finite values");

  const Index n = b.size();
  std::vector<Vec> basis;
  basis.push_back(b / beta);

  Mat H = Mat::Zero(max_iter + 1, max_iter);
  std::vector<double> cs(static_cast<size_t>(max_iter), 0.0);
  std::vector<double> sn(static_cast<size_t>(max_iter), 0.0);
  Vec g = Vec::Zero(max_iter + 1);
  g[0] = beta;

  int k = 0;
  for (; k < max_iter; ++k) {
    Vec w = apply_A(precondition(basis[static_cast<size_t>(k)]));
    if (!w.allFinite()) throw Error("gmres: operator produced non-finite values");
    const double w_norm_in = w.norm();

    for (int i = 0; i <= k; ++i) {
      const double hik = basis[static_cast<size_t>(i)].dot(w);
      H(i, k) = hik;
      w -= hik * basis[static_cast<size_t>(i)];
    }
    if (w.norm() < 1e-8 * w_norm_in) {
      for (int i = 0; i <= k; ++i) {
        const double corr = basis[static_cast<size_t>(i)].dot(w);
        H(i, k) += corr;
        w -= corr * basis[static_cast<size_t>(i)];
      }
    }
    const double h_next = w.norm();
    H(k + 1, k) = h_next;

    for (int i = 0; i < k; ++i) {
      const double t = cs[static_cast<size_t>(i)] * H(i, k) + sn[static_cast<size_t>(i)] * H(i + 1, k);
      H(i + 1, k) = -sn[static_cast<size_t>(i)] * H(i, k) + cs[static_cast<size_t>(i)] * H(i + 1, k);
      H(i, k) = t;
    }
    const double denom = std::hypot(H(k, k), H(k + 1, k));
    cs[static_cast<size_t>(k)] = denom == 0.0 ? 1.0 : H(k, k) / denom;
    sn[static_cast<size_t>(k)] = denom == 0.0 ? 0.0 : H(k + 1, k) / denom;
    H(k, k) = denom;
    H(k + 1, k) = 0.0;
    g[k + 1] = -sn[static_cast<size_t>(k)] * g[k];
    g[k] = cs[static_cast<size_t>(k)] * g[k];

    const double rel = std::abs(g[k + 1]) / beta;
    if (!std::isfinite(rel)) throw Error("gmres: residual became non-finite");
    report.relative_residuals.push_back(rel);

    const bool lucky = h_next < 1e-14;
    if (lucky) report.breakdown = true;
    if (rel <= tol || lucky) {
      ++k;
      break;
    }
    basis.push_back(w / h_next);
  }

  report.iterations = k;
  report.converged = !report.relative_residuals.empty() && report.relative_residuals.back() <= tol;

  // Back-substitute the triangularized least-squares system and assemble the
  // solution from the basis.
  Vec y = Vec::Zero(k);
  for (int i = k - 1; i >= 0; --i) {
    double s = g[i];
    for (int j = i + 1; j < k; ++j) s -= H(i, j) * y[j];
    y[i] = H(i, i) != 0.0 ? s / H(i, i) : 0.0;
  }
  Vec xt = Vec::Zero(n);
  for (int i = 0; i < k; ++i) xt += y[i] * basis[static_cast<size_t>(i)];
  report.solution = precondition(xt);

  report.true_relative_residual = (b - apply_A(report.solution)).norm() / beta;
  if (counter) {
    report.setup_solves = counter->total(SolvePhase::setup);
    report.apply_solves = counter->total(SolvePhase::apply);
  }
  return report;
}

}  // namespace treesaddle
