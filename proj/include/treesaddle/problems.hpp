#pragma once

// Desk-scale instance generators: random tree-coupled systems, scenario-tree
// quadratic programs with consensus couplings, and multiple-shooting optimal
// control for a small predator-prey model. Generators are pure functions of
// their configuration (and seed) and every emitted instance passes the
// assumption checks.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "treesaddle/system.hpp"
#include "treesaddle/tree.hpp"
#include "treesaddle/types.hpp"
#include "treesaddle/validate.hpp"

namespace treesaddle {

enum class TreeShape { path, star, full_binary, random_tree };

inline DirectedTree make_tree(TreeShape shape, int vertices, std::uint64_t seed = 0) {
  if (vertices < 1) throw InvalidInputError("make_tree: need at least one vertex");
  std::vector<std::pair<int, int>> arcs;
  switch (shape) {
    case TreeShape::path:
      for (int v = 1; v < vertices; ++v) arcs.emplace_back(v, v + 1);
      break;
    case TreeShape::star:
      for (int v = 2; v <= vertices; ++v) arcs.emplace_back(1, v);
      break;
    case TreeShape::full_binary:
      for (int v = 2; v <= vertices; ++v) arcs.emplace_back(v / 2, v);
      break;
    case TreeShape::random_tree: {
      std::mt19937_64 rng(seed);
      for (int v = 2; v <= vertices; ++v) {
        std::uniform_int_distribution<int> pick(1, v - 1);
        arcs.emplace_back(pick(rng), v);
      }
      break;
    }
  }
  return build_tree(arcs, vertices);
}

struct RandomSystemConfig {
  enum class Style { spd, indefinite };

  TreeShape shape = TreeShape::random_tree;
  int vertices = 8;
  Index max_block = 4;     // n_i drawn from [1, max_block]
  Index max_coupling = 2;  // l_k drawn from [1, max_coupling]
  Style style = Style::spd;
};

namespace detail {

inline Mat random_gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat M(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) M(r, c) = dist(rng);
  return M;
}

inline Vec random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (Index j = 0; j < n; ++j) v[j] = dist(rng);
  return v;
}

inline Mat random_spd(std::mt19937_64& rng, Index n, double ridge = 0.5) {
  const Mat L = random_gaussian(rng, n, n);
  Mat M = L * L.transpose();
  M.diagonal().array() += ridge;
  return ((M + Mat(M.transpose())) / 2.0).eval();
}

// Symmetric with eigenvalues of both signs pushed away from zero.
inline Mat random_indefinite(std::mt19937_64& rng, Index n) {
  Mat G = random_gaussian(rng, n, n);
  Mat Sym = ((G + Mat(G.transpose())) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(Sym);
  Vec lam = es.eigenvalues();
  for (Index j = 0; j < n; ++j) {
    const double s = lam[j] >= 0.0 ? 1.0 : -1.0;
    if (std::abs(lam[j]) < 0.3) lam[j] = 0.3 * s;
  }
  Mat M = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  return ((M + Mat(M.transpose())) / 2.0).eval();
}

}  // namespace detail

/// Random instance satisfying the assumption checks; indefinite-style blocks
/// are resampled (up to 20 attempts) until they do. Deterministic per seed.
inline TreeCoupledSystem gen_random_system(const RandomSystemConfig& cfg, std::uint64_t seed) {
  if (cfg.max_block < 1 || cfg.max_coupling < 1)
    throw InvalidInputError("gen_random_system: dimensions must be positive");
  const DirectedTree tree = make_tree(cfg.shape, cfg.vertices, seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 rng(seed);

  for (int attempt = 0; attempt < 20; ++attempt) {
    std::vector<VertexBlocks> vb(static_cast<size_t>(tree.vertex_count()) + 1);
    std::uniform_int_distribution<Index> block_dist(1, cfg.max_block);
    for (int i = 1; i <= tree.vertex_count(); ++i) {
      const Index n_i = block_dist(rng);
      vb[static_cast<size_t>(i)].B = cfg.style == RandomSystemConfig::Style::spd
                                         ? detail::random_spd(rng, n_i)
                                         : detail::random_indefinite(rng, n_i);
      vb[static_cast<size_t>(i)].h = detail::random_vector(rng, n_i);
    }
    std::vector<ArcBlocks> ab(static_cast<size_t>(tree.arc_count()) + 1);
    for (int k = 1; k <= tree.arc_count(); ++k) {
      const Arc& a = tree.arc(k);
      const Index max_l = std::min({cfg.max_coupling, vb[static_cast<size_t>(a.tail)].B.rows(),
                                    vb[static_cast<size_t>(a.head)].B.rows()});
      std::uniform_int_distribution<Index> l_dist(1, max_l);
      const Index l = l_dist(rng);
      ab[static_cast<size_t>(k)].E_out =
          detail::random_gaussian(rng, l, vb[static_cast<size_t>(a.tail)].B.rows());
      ab[static_cast<size_t>(k)].E_in =
          detail::random_gaussian(rng, l, vb[static_cast<size_t>(a.head)].B.rows());
      ab[static_cast<size_t>(k)].D = detail::random_spd(rng, l);
      ab[static_cast<size_t>(k)].f = detail::random_vector(rng, l);
    }
    TreeCoupledSystem sys(tree, std::move(vb), std::move(ab));
    if (check_assumptions(sys).ok(true)) return sys;
  }
  throw Error("gen_random_system: no valid instance after 20 attempts (seed " +
              std::to_string(seed) + ")");
}

/// Scenario-tree quadratic program: per-vertex KKT blocks of a random convex
/// quadratic with linear internal constraints, coupled along the tree by
/// consensus rows on shared state entries. The homotopy style adds lambda to
/// the primal diagonal, -delta to the constraint diagonal and sets
/// D_k = delta I, which makes every coupling block invertible.
struct ScenarioQPConfig {
  enum class Style { kkt, homotopy };

  int depth = 3;
  std::vector<int> branching = {2};  // children per level; last entry repeats
  int state_dim = 2;
  int control_dim = 1;
  int constraint_dim = 1;
  Style style = Style::homotopy;
  double lambda = 0.1;
  double delta = 0.1;
  int coupling = 0;  // consensus width; 0 means the full state
};

inline TreeCoupledSystem gen_scenario_qp(const ScenarioQPConfig& cfg, std::uint64_t seed) {
  if (cfg.depth < 0) throw InvalidInputError("gen_scenario_qp: depth must be nonnegative");
  if (cfg.state_dim < 1 || cfg.control_dim < 0 || cfg.constraint_dim < 0)
    throw InvalidInputError("gen_scenario_qp: invalid dimensions");
  const int coupling = cfg.coupling == 0 ? cfg.state_dim : cfg.coupling;
  if (coupling > cfg.state_dim)
    throw InvalidInputError("gen_scenario_qp: coupling width " + std::to_string(coupling) +
                            " exceeds the state dimension " + std::to_string(cfg.state_dim));
  const Index nz = cfg.state_dim + cfg.control_dim;
  if (cfg.constraint_dim > nz)
    throw InvalidInputError("gen_scenario_qp: more constraints than primal variables");

  // Breadth-first tree from the branching schedule.
  std::vector<std::pair<int, int>> arc_list;
  std::vector<int> frontier{1};
  int next_id = 1;
  for (int level = 0; level < cfg.depth; ++level) {
    const int children =
        cfg.branching.empty()
            ? 1
            : cfg.branching[std::min<size_t>(static_cast<size_t>(level), cfg.branching.size() - 1)];
    std::vector<int> next_frontier;
    for (int v : frontier)
      for (int c = 0; c < children; ++c) {
        arc_list.emplace_back(v, ++next_id);
        next_frontier.push_back(next_id);
      }
    frontier = std::move(next_frontier);
  }
  const DirectedTree tree = build_tree(arc_list, next_id);

  std::mt19937_64 rng(seed);
  std::vector<VertexBlocks> vb(static_cast<size_t>(tree.vertex_count()) + 1);
  for (int i = 1; i <= tree.vertex_count(); ++i) {
    Mat H = detail::random_spd(rng, nz, 1e-2);
    const Mat A = detail::random_gaussian(rng, cfg.constraint_dim, nz);
    const Vec g = detail::random_vector(rng, nz);
    const Vec b = detail::random_vector(rng, cfg.constraint_dim);

    const Index n_i = nz + cfg.constraint_dim;
    Mat B = Mat::Zero(n_i, n_i);
    B.topLeftCorner(nz, nz) = H;
    if (cfg.style == ScenarioQPConfig::Style::homotopy)
      B.topLeftCorner(nz, nz).diagonal().array() += cfg.lambda;
    B.topRightCorner(nz, cfg.constraint_dim) = A.transpose();
    B.bottomLeftCorner(cfg.constraint_dim, nz) = A;
    if (cfg.style == ScenarioQPConfig::Style::homotopy)
      B.bottomRightCorner(cfg.constraint_dim, cfg.constraint_dim) =
          -cfg.delta * Mat::Identity(cfg.constraint_dim, cfg.constraint_dim);

    Vec h(n_i);
    h.head(nz) = -g;
    h.tail(cfg.constraint_dim) = b;
    vb[static_cast<size_t>(i)] = VertexBlocks{std::move(B), std::move(h)};
  }

  std::vector<ArcBlocks> ab(static_cast<size_t>(tree.arc_count()) + 1);
  for (int k = 1; k <= tree.arc_count(); ++k) {
    const Arc& a = tree.arc(k);
    ArcBlocks blocks;
    blocks.E_out = Mat::Zero(coupling, vb[static_cast<size_t>(a.tail)].B.rows());
    blocks.E_in = Mat::Zero(coupling, vb[static_cast<size_t>(a.head)].B.rows());
    for (int r = 0; r < coupling; ++r) {
      blocks.E_out(r, r) = 1.0;  // consensus on the leading state entries
      blocks.E_in(r, r) = 1.0;
    }
    blocks.D = cfg.style == ScenarioQPConfig::Style::homotopy
                   ? Mat(cfg.delta * Mat::Identity(coupling, coupling))
                   : Mat(Mat::Zero(coupling, coupling));
    blocks.f = Vec::Zero(coupling);
    ab[static_cast<size_t>(k)] = std::move(blocks);
  }

  return TreeCoupledSystem(tree, std::move(vb), std::move(ab));
}

/// Multiple shooting for the optimal control of a damped predator-prey
/// model,
///   f(y, u) = (y1 - y1 y2 - c1 y1 u, -y2 + y1 y2 - c2 y2 u),
/// with a quadratic tracking objective. The horizon is split into
/// subintervals, one per tree vertex, each discretized by forward Euler and
/// linearized about the trajectory driven by the constant reference control.
/// Matching constraints at the interfaces become consensus rows; interfaces
/// between vertices that are not tree-adjacent are chained through copies of
/// the interface state at the vertices along the tree path.
struct ShootingConfig {
  enum class Shape { binary, shallow };

  double c1 = 0.4;
  double c2 = 0.2;
  Eigen::Vector2d y_desired{1.0, 1.0};
  double u_ref = 0.5;
  double beta = 0.1;
  double horizon = 12.0;
  Eigen::Vector2d y0{0.5, 0.7};
  int subintervals = 8;
  int euler_steps = 40;  // per subinterval
  Shape shape = Shape::binary;
};

inline Eigen::Vector2d shooting_vector_field(const ShootingConfig& cfg, const Eigen::Vector2d& y,
                                             double u) {
  return {y[0] - y[0] * y[1] - cfg.c1 * y[0] * u, -y[1] + y[0] * y[1] - cfg.c2 * y[1] * u};
}

namespace detail {

struct ShootingTopology {
  std::vector<std::pair<int, int>> arcs;
  std::vector<int> owner;  // vertex id of each subinterval
};

// Balanced middle split: the vertex owns the middle interval, the halves
// become its subtrees. Time-adjacent intervals end up close in the tree.
inline int split_intervals(int lo, int hi, ShootingTopology& topo, int& next_id) {
  if (lo >= hi) return 0;
  const int mid = lo + (hi - lo) / 2;
  const int id = ++next_id;
  topo.owner[static_cast<size_t>(mid)] = id;
  const int left = split_intervals(lo, mid, topo, next_id);
  if (left) topo.arcs.emplace_back(id, left);
  const int right = split_intervals(mid + 1, hi, topo, next_id);
  if (right) topo.arcs.emplace_back(id, right);
  return id;
}

}  // namespace detail

inline TreeCoupledSystem gen_multiple_shooting(const ShootingConfig& cfg) {
  if (cfg.subintervals < 1)
    throw InvalidInputError("gen_multiple_shooting: need at least one subinterval");
  if (cfg.euler_steps < 1)
    throw InvalidInputError("gen_multiple_shooting: need at least one integration step");
  const int V = cfg.subintervals;
  const int s = cfg.euler_steps;
  const double dt = cfg.horizon / static_cast<double>(V * s);

  detail::ShootingTopology topo;
  topo.owner.assign(static_cast<size_t>(V), 0);
  if (cfg.shape == ShootingConfig::Shape::shallow) {
    topo.owner[0] = 1;
    for (int t = 1; t < V; ++t) {
      topo.owner[static_cast<size_t>(t)] = t + 1;
      topo.arcs.emplace_back(1, t + 1);
    }
  } else {
    int next_id = 0;
    detail::split_intervals(0, V, topo, next_id);
  }
  const DirectedTree tree = build_tree(topo.arcs, V);

  // Nominal trajectory: one continuous forward-Euler simulation of the whole
  // horizon under the constant reference control.
  std::vector<Eigen::Vector2d> nominal(static_cast<size_t>(V * s) + 1);
  nominal[0] = cfg.y0;
  for (int g = 0; g < V * s; ++g)
    nominal[static_cast<size_t>(g + 1)] =
        nominal[static_cast<size_t>(g)] +
        dt * shooting_vector_field(cfg, nominal[static_cast<size_t>(g)], cfg.u_ref);

  // Interface routing. Quantities chained along a path: the end state of the
  // earlier interval, copies at intermediate vertices, the start state of the
  // later interval. Copies are appended to the primal variables of their
  // vertex, after the states and controls.
  const Index base_primal = 2 * (s + 1) + s;
  std::vector<int> copies(static_cast<size_t>(V) + 1, 0);
  struct RowGroup {
    std::array<Index, 2> tail_coord;
    std::array<Index, 2> head_coord;
  };
  std::vector<std::vector<RowGroup>> arc_rows(static_cast<size_t>(tree.arc_count()) + 1);

  const auto vertex_interval = [&](int v) {
    for (int t = 0; t < V; ++t)
      if (topo.owner[static_cast<size_t>(t)] == v) return t;
    throw Error("gen_multiple_shooting: vertex without interval");
  };
  const auto arc_between = [&](int a, int b) {  // (arc id, a is tail)
    for (int k : tree.out_arcs(a))
      if (tree.arc(k).head == b) return std::make_pair(k, true);
    for (int k : tree.out_arcs(b))
      if (tree.arc(k).head == a) return std::make_pair(k, false);
    throw Error("gen_multiple_shooting: vertices are not adjacent");
  };

  for (int t = 0; t + 1 < V; ++t) {
    const int u = topo.owner[static_cast<size_t>(t)];
    const int v = topo.owner[static_cast<size_t>(t + 1)];
    // Tree path u -> ... -> v via the lowest common ancestor.
    std::vector<int> up{u};
    for (int w = u; w != 0; w = tree.parent(w))
      if (w != u) up.push_back(w);
    std::vector<int> down{v};
    int meet = -1;
    for (int w = v; w != 0; w = tree.parent(w)) {
      if (w != v) down.push_back(w);
      const auto it = std::find(up.begin(), up.end(), w);
      if (it != up.end()) {
        meet = static_cast<int>(it - up.begin());
        break;
      }
    }
    if (meet < 0) throw Error("gen_multiple_shooting: disconnected interface");
    // Ascend from u to the common ancestor, then descend to v. The first
    // reversed element of `down` is the ancestor itself and is skipped.
    std::vector<int> path(up.begin(), up.begin() + meet + 1);
    for (auto it = down.rbegin(); it != down.rend(); ++it)
      if (*it != path.back()) path.push_back(*it);

    // Coordinates of the chained quantity at every path vertex.
    std::vector<std::array<Index, 2>> coord(path.size());
    for (size_t j = 0; j < path.size(); ++j) {
      const int w = path[j];
      if (j == 0) {
        coord[j] = {static_cast<Index>(2 * s), static_cast<Index>(2 * s + 1)};  // end state of u
      } else if (j + 1 == path.size()) {
        coord[j] = {0, 1};  // start state of v
      } else {
        const Index c0 = base_primal + 2 * copies[static_cast<size_t>(w)];
        copies[static_cast<size_t>(w)] += 1;
        coord[j] = {c0, c0 + 1};
      }
    }
    for (size_t j = 0; j + 1 < path.size(); ++j) {
      const auto [k, forward] = arc_between(path[j], path[j + 1]);
      arc_rows[static_cast<size_t>(k)].push_back(
          forward ? RowGroup{coord[j], coord[j + 1]} : RowGroup{coord[j + 1], coord[j]});
    }
  }

  // Vertex blocks: Gauss-Newton KKT systems of the local tracking objective
  // subject to the linearized dynamics (and the initial condition on the
  // first interval).
  std::vector<VertexBlocks> vb(static_cast<size_t>(V) + 1);
  for (int vtx = 1; vtx <= V; ++vtx) {
    const int t = vertex_interval(vtx);
    const Index n_primal = base_primal + 2 * copies[static_cast<size_t>(vtx)];
    const Index n_cons = 2 * s + (t == 0 ? 2 : 0);
    const Index n_i = n_primal + n_cons;

    Vec weights(n_primal);
    Vec reference = Vec::Zero(n_primal);
    for (int j = 0; j <= s; ++j) {
      weights.segment(2 * j, 2) = Vec::Constant(2, dt);
      reference.segment(2 * j, 2) = cfg.y_desired;
    }
    for (int j = 0; j < s; ++j) {
      weights[2 * (s + 1) + j] = cfg.beta * dt;
      reference[2 * (s + 1) + j] = cfg.u_ref;
    }
    for (Index j = base_primal; j < n_primal; ++j) weights[j] = 1e-2;  // copy regularization

    Mat A = Mat::Zero(n_cons, n_primal);
    Vec b = Vec::Zero(n_cons);
    for (int j = 0; j < s; ++j) {
      const int g = t * s + j;
      const Eigen::Vector2d yb = nominal[static_cast<size_t>(g)];
      Eigen::Matrix2d Jy;
      Jy << 1.0 - yb[1] - cfg.c1 * cfg.u_ref, -yb[0], yb[1], -1.0 + yb[0] - cfg.c2 * cfg.u_ref;
      const Eigen::Matrix2d Ag = Eigen::Matrix2d::Identity() + dt * Jy;
      const Eigen::Vector2d Bg(-dt * cfg.c1 * yb[0], -dt * cfg.c2 * yb[1]);
      A.block(2 * j, 2 * (j + 1), 2, 2) = Eigen::Matrix2d::Identity();
      A.block(2 * j, 2 * j, 2, 2) = -Ag;
      A.block(2 * j, 2 * (s + 1) + j, 2, 1) = -Bg;
      b.segment(2 * j, 2) = nominal[static_cast<size_t>(g + 1)] - Ag * yb - Bg * cfg.u_ref;
    }
    if (t == 0) {
      A.block(2 * s, 0, 2, 2) = Eigen::Matrix2d::Identity();
      b.segment(2 * s, 2) = cfg.y0;
    }

    Mat B = Mat::Zero(n_i, n_i);
    B.topLeftCorner(n_primal, n_primal) = Mat(weights.asDiagonal());
    B.topRightCorner(n_primal, n_cons) = A.transpose();
    B.bottomLeftCorner(n_cons, n_primal) = A;
    Vec h(n_i);
    h.head(n_primal) = weights.cwiseProduct(reference);
    h.tail(n_cons) = b;
    vb[static_cast<size_t>(vtx)] = VertexBlocks{std::move(B), std::move(h)};
  }

  std::vector<ArcBlocks> ab(static_cast<size_t>(tree.arc_count()) + 1);
  for (int k = 1; k <= tree.arc_count(); ++k) {
    const Arc& a = tree.arc(k);
    const auto& rows = arc_rows[static_cast<size_t>(k)];
    const Index l = static_cast<Index>(2 * rows.size());
    ArcBlocks blocks;
    blocks.E_out = Mat::Zero(l, vb[static_cast<size_t>(a.tail)].B.rows());
    blocks.E_in = Mat::Zero(l, vb[static_cast<size_t>(a.head)].B.rows());
    blocks.D = Mat::Zero(l, l);
    // The nominal trajectory is simulated continuously across interfaces, so
    // the matching defects vanish.
    blocks.f = Vec::Zero(l);
    for (size_t gidx = 0; gidx < rows.size(); ++gidx)
      for (int c = 0; c < 2; ++c) {
        blocks.E_out(static_cast<Index>(2 * gidx) + c, rows[gidx].tail_coord[static_cast<size_t>(c)]) = 1.0;
        blocks.E_in(static_cast<Index>(2 * gidx) + c, rows[gidx].head_coord[static_cast<size_t>(c)]) = 1.0;
      }
    ab[static_cast<size_t>(k)] = std::move(blocks);
  }

  return TreeCoupledSystem(tree, std::move(vb), std::move(ab));
}

}  // namespace treesaddle
