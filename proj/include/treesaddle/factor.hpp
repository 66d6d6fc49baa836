#pragma once

// Dense factorization backend. Every solve against a vertex-tagged
// factorization is recorded by a SolveCounter, one count per right-hand-side
// column; that counter is the cost metric reported by the solvers.

#include <array>
#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "treesaddle/types.hpp"

namespace treesaddle {

enum class SolvePhase { setup = 0, apply = 1 };

/// Per-vertex counts of solves against the vertex blocks, attributed to a
/// phase (setup vs. per-application). Increments are atomic so concurrent
/// sibling solves could share one counter; totals are read single-threaded.
class SolveCounter {
 public:
  explicit SolveCounter(int vertex_count)
      : counts_{std::vector<std::atomic<std::int64_t>>(static_cast<size_t>(vertex_count) + 1),
                std::vector<std::atomic<std::int64_t>>(static_cast<size_t>(vertex_count) + 1)} {}

  SolveCounter(const SolveCounter&) = delete;
  SolveCounter& operator=(const SolveCounter&) = delete;

  void record(int vertex, std::int64_t columns) {
    counts_[static_cast<size_t>(phase_)][static_cast<size_t>(vertex)].fetch_add(
        columns, std::memory_order_relaxed);
  }

  void set_phase(SolvePhase p) { phase_ = p; }
  SolvePhase phase() const { return phase_; }

  std::int64_t count(int vertex, SolvePhase p) const {
    return counts_[static_cast<size_t>(p)][static_cast<size_t>(vertex)].load(
        std::memory_order_relaxed);
  }
  std::int64_t count(int vertex) const {
    return count(vertex, SolvePhase::setup) + count(vertex, SolvePhase::apply);
  }
  std::int64_t total(SolvePhase p) const {
    std::int64_t t = 0;
    for (const auto& c : counts_[static_cast<size_t>(p)]) t += c.load(std::memory_order_relaxed);
    return t;
  }
  std::int64_t total() const { return total(SolvePhase::setup) + total(SolvePhase::apply); }

  void reset() {
    for (auto& phase : counts_)
      for (auto& c : phase) c.store(0, std::memory_order_relaxed);
  }
  void reset(SolvePhase p) {
    for (auto& c : counts_[static_cast<size_t>(p)]) c.store(0, std::memory_order_relaxed);
  }

  int vertex_count() const { return static_cast<int>(counts_[0].size()) - 1; }

 private:
  std::array<std::vector<std::atomic<std::int64_t>>, 2> counts_;
  SolvePhase phase_ = SolvePhase::setup;
};

/// RAII helper switching a counter to a phase for the current scope.
class PhaseScope {
 public:
  PhaseScope(SolveCounter* counter, SolvePhase p) : counter_(counter) {
    if (counter_) {
      previous_ = counter_->phase();
      counter_->set_phase(p);
    }
  }
  ~PhaseScope() {
    if (counter_) counter_->set_phase(previous_);
  }
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  SolveCounter* counter_;
  SolvePhase previous_ = SolvePhase::setup;
};

enum class FactorKind { lu, cholesky };

/// Reusable factorization of a dense matrix. LU with partial pivoting for
/// symmetric indefinite vertex blocks, Cholesky for the positive definite
/// Schur blocks. Supports multi-column and transpose solves.
class Factorization {
 public:
  Factorization() = default;

  static Factorization make(const Mat& M, FactorKind kind, const std::string& label = {}) {
    if (M.rows() != M.cols())
      throw InvalidInputError("factorize: matrix " + (label.empty() ? "" : label + " ") +
                              "is not square");
    Factorization f;
    f.kind_ = kind;
    f.order_ = M.rows();
    if (f.order_ == 0) return f;
    const double scale = M.norm();
    if (kind == FactorKind::lu) {
      f.lu_.compute(M);
      const double min_pivot = f.lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
      if (!(min_pivot > 1e-14 * scale))
        throw SingularMatrixError("factorize: " + (label.empty() ? "matrix" : label) +
                                  " is singular to working precision");
    } else {
      f.llt_.compute(M);
      if (f.llt_.info() != Eigen::Success)
        throw NotPositiveDefiniteError("factorize: " + (label.empty() ? "matrix" : label) +
                                       " is not positive definite");
    }
    return f;
  }

  /// Tags this factorization as the block of a vertex so that solves are
  /// charged to it.
  void attach_counter(SolveCounter* counter, int vertex) {
    counter_ = counter;
    vertex_ = vertex;
  }

  Index order() const { return order_; }
  FactorKind kind() const { return kind_; }

  Vec solve(const Vec& rhs) const {
    record(1);
    if (order_ == 0) return Vec(0);
    return kind_ == FactorKind::lu ? Vec(lu_.solve(rhs)) : Vec(llt_.solve(rhs));
  }

  Mat solve(const Mat& rhs) const {
    record(rhs.cols());
    if (order_ == 0) return Mat(0, rhs.cols());
    return kind_ == FactorKind::lu ? Mat(lu_.solve(rhs)) : Mat(llt_.solve(rhs));
  }

  Vec solve_transpose(const Vec& rhs) const {
    record(1);
    if (order_ == 0) return Vec(0);
    return kind_ == FactorKind::lu ? Vec(lu_.transpose().solve(rhs)) : Vec(llt_.solve(rhs));
  }

  Mat solve_transpose(const Mat& rhs) const {
    record(rhs.cols());
    if (order_ == 0) return Mat(0, rhs.cols());
    return kind_ == FactorKind::lu ? Mat(lu_.transpose().solve(rhs)) : Mat(llt_.solve(rhs));
  }

 private:
  void record(Index columns) const {
    if (counter_) counter_->record(vertex_, columns);
  }

  FactorKind kind_ = FactorKind::lu;
  Index order_ = 0;
  Eigen::PartialPivLU<Mat> lu_;
  Eigen::LLT<Mat> llt_;
  SolveCounter* counter_ = nullptr;
  int vertex_ = 0;
};

}  // namespace treesaddle
