#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "gmmcd/common.hpp"

namespace gmmcd {

/// Weighted point set: row i of `positions` carries mass `masses[i]`.
struct Signature {
  Mat positions;  // M x D
  Vec masses;     // M, all > 0

  Eigen::Index size() const { return positions.rows(); }
  Eigen::Index dim() const { return positions.cols(); }
  double total_mass() const { return masses.sum(); }

  void validate() const {
    if (positions.rows() < 1) throw Error("Signature: needs at least one position");
    if (masses.size() != positions.rows())
      throw Error("Signature: positions and masses disagree on length");
    for (Eigen::Index i = 0; i < masses.size(); ++i) {
      if (!(masses[i] > 0.0))
        throw Error("Signature: mass " + std::to_string(i) + " is not positive");
    }
  }
};

/// Pairwise Euclidean distances, ε[i][j] = ‖a.positions[i] − b.positions[j]‖.
using GroundDistanceMatrix = Mat;

/// Optimal transport plan between two signatures. Rows follow the source
/// signature, columns the sink signature. When the total masses differ, the
/// smaller total is moved (row sums ≤ source masses, column sums ≤ sink
/// masses, Σ flows = min of the two totals).
struct FlowMatrix {
  Mat flows;
  double total_flow = 0.0;
};

inline GroundDistanceMatrix ground_distances(const Signature& a, const Signature& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) throw Error("ground_distances: signature dims differ");
  GroundDistanceMatrix d(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      d(i, j) = (a.positions.row(i) - b.positions.row(j)).norm();
    }
  }
  return d;
}

namespace detail {

/// Balanced transportation problem solved by the transportation simplex:
/// northwest-corner start, then MODI pivoting with Bland's rule (first
/// negative reduced cost in row-major order enters; lexicographically first
/// minimal basic cell on the cycle leaves). Supplies and demands must sum to
/// the same total. Returns the optimal flows, row-major m x n.
inline std::vector<double> transport_simplex(const std::vector<double>& supply,
                                             const std::vector<double>& demand,
                                             const std::vector<double>& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  assert(cost.size() == m * n);
  constexpr double kPivotTol = 1e-12;

  std::vector<double> flow(m * n, 0.0);
  std::vector<char> basic(m * n, 0);

  // Northwest-corner start: marks exactly m + n - 1 cells basic (some with
  // zero flow when a supply and a demand exhaust together).
  {
    std::vector<double> s = supply;
    std::vector<double> d = demand;
    std::size_t i = 0, j = 0;
    while (true) {
      const double x = std::max(0.0, std::min(s[i], d[j]));
      flow[i * n + j] = x;
      basic[i * n + j] = 1;
      s[i] -= x;
      d[j] -= x;
      if (i == m - 1 && j == n - 1) break;
      // Advance into the exhausted direction, but never past the last row or
      // column: rounding can leave a tiny residue on one side even though the
      // caller balanced the totals, and the walk must still end at (m-1, n-1).
      if (j == n - 1) {
        ++i;
      } else if (i == m - 1) {
        ++j;
      } else if (s[i] <= 0.0) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Basis graph over m row nodes and n column nodes; basic cells are edges.
  std::vector<double> u(m), v(n);
  std::vector<char> u_set(m), v_set(n);
  std::vector<std::size_t> parent_node(m + n), parent_cell(m + n);
  std::vector<char> visited(m + n);

  const std::size_t max_pivots = 2000 * (m + n + 2);
  for (std::size_t pivot = 0;; ++pivot) {
    if (pivot > max_pivots) throw Error("transport_simplex: pivot limit exceeded");

    // Duals from the spanning tree: u_i + v_j = c_ij on basic cells.
    std::fill(u_set.begin(), u_set.end(), 0);
    std::fill(v_set.begin(), v_set.end(), 0);
    u[0] = 0.0;
    u_set[0] = 1;
    std::deque<std::size_t> queue{0};  // nodes: rows 0..m-1, cols m..m+n-1
    while (!queue.empty()) {
      const std::size_t node = queue.front();
      queue.pop_front();
      if (node < m) {
        for (std::size_t j = 0; j < n; ++j) {
          if (basic[node * n + j] && !v_set[j]) {
            v[j] = cost[node * n + j] - u[node];
            v_set[j] = 1;
            queue.push_back(m + j);
          }
        }
      } else {
        const std::size_t j = node - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (basic[i * n + j] && !u_set[i]) {
            u[i] = cost[i * n + j] - v[j];
            u_set[i] = 1;
            queue.push_back(i);
          }
        }
      }
    }

    for (std::size_t i = 0; i < m; ++i) {
      if (!u_set[i]) throw Error("transport_simplex: basis lost connectivity");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!v_set[j]) throw Error("transport_simplex: basis lost connectivity");
    }

    // Entering cell: first nonbasic with reduced cost below -tolerance.
    std::size_t enter_i = m, enter_j = n;
    for (std::size_t i = 0; i < m && enter_i == m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (basic[i * n + j]) continue;
        if (cost[i * n + j] - u[i] - v[j] < -kPivotTol) {
          enter_i = i;
          enter_j = j;
          break;
        }
      }
    }
    if (enter_i == m) break;  // optimal

    // Unique tree path from row enter_i to column enter_j.
    std::fill(visited.begin(), visited.end(), 0);
    visited[enter_i] = 1;
    queue.assign(1, enter_i);
    const std::size_t target = m + enter_j;
    while (!queue.empty() && !visited[target]) {
      const std::size_t node = queue.front();
      queue.pop_front();
      if (node < m) {
        for (std::size_t j = 0; j < n; ++j) {
          if (basic[node * n + j] && !visited[m + j]) {
            visited[m + j] = 1;
            parent_node[m + j] = node;
            parent_cell[m + j] = node * n + j;
            queue.push_back(m + j);
          }
        }
      } else {
        const std::size_t j = node - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (basic[i * n + j] && !visited[i]) {
            visited[i] = 1;
            parent_node[i] = node;
            parent_cell[i] = i * n + j;
            queue.push_back(i);
          }
        }
      }
    }
    if (!visited[target]) throw Error("transport_simplex: basis lost connectivity");

    // Cycle = entering cell (gains flow) + alternating path cells. Cells an
    // odd number of steps from the entering cell lose flow.
    std::vector<std::size_t> minus_cells, plus_cells;
    {
      bool minus = true;  // path cell adjacent to enter_j loses flow
      for (std::size_t node = target; node != enter_i; node = parent_node[node]) {
        (minus ? minus_cells : plus_cells).push_back(parent_cell[node]);
        minus = !minus;
      }
    }

    double theta = std::numeric_limits<double>::infinity();
    for (const std::size_t cell : minus_cells) theta = std::min(theta, flow[cell]);
    std::size_t leave = m * n;
    for (const std::size_t cell : minus_cells) {
      if (flow[cell] <= theta + kPivotTol && cell < leave) leave = cell;
    }

    flow[enter_i * n + enter_j] += theta;
    for (const std::size_t cell : plus_cells) flow[cell] += theta;
    for (const std::size_t cell : minus_cells) flow[cell] -= theta;
    flow[leave] = 0.0;
    basic[leave] = 0;
    basic[enter_i * n + enter_j] = 1;
  }

  for (double& f : flow) {
    if (f < 0.0) f = 0.0;
  }
  return flow;
}

}  // namespace detail

/// Exact minimum-cost transport plan. Moves min(Σ a.masses, Σ b.masses); the
/// heavier side keeps the surplus in place (modeled internally as a zero-cost
/// slack node). Coincident positions (distance exactly 0) are matched
/// greedily before pivoting; for Euclidean ground distances this preserves
/// optimality because coincident points are interchangeable.
inline FlowMatrix solve_transport(const Signature& a, const Signature& b,
                                  const GroundDistanceMatrix& dist) {
  a.validate();
  b.validate();
  const std::size_t m = static_cast<std::size_t>(a.size());
  const std::size_t n = static_cast<std::size_t>(b.size());
  if (dist.rows() != a.size() || dist.cols() != b.size())
    throw Error("solve_transport: distance matrix shape does not match signatures");

  FlowMatrix result;
  result.flows = Mat::Zero(a.size(), b.size());

  std::vector<double> supply(m), demand(n);
  for (std::size_t i = 0; i < m; ++i) supply[i] = a.masses[static_cast<Eigen::Index>(i)];
  for (std::size_t j = 0; j < n; ++j) demand[j] = b.masses[static_cast<Eigen::Index>(j)];

  // Greedy zero-distance prematch.
  for (std::size_t i = 0; i < m; ++i) {
    if (supply[i] <= 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (demand[j] <= 0.0 || dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0)
        continue;
      const double x = std::min(supply[i], demand[j]);
      result.flows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += x;
      supply[i] -= x;
      demand[j] -= x;
      if (supply[i] <= 0.0) break;
    }
  }

  double residual_supply = 0.0, residual_demand = 0.0;
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < m; ++i) {
    if (supply[i] > 0.0) {
      rows.push_back(i);
      residual_supply += supply[i];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (demand[j] > 0.0) {
      cols.push_back(j);
      residual_demand += demand[j];
    }
  }
  result.total_flow = std::min(a.masses.sum(), b.masses.sum());

  // One side fully matched: the rest of the heavier side stays put.
  if (rows.empty() || cols.empty() ||
      std::min(residual_supply, residual_demand) <= 0.0) {
    return result;
  }

  // Balance with a zero-cost slack row or column, then solve exactly.
  const double imbalance = residual_supply - residual_demand;
  std::vector<double> s, d;
  for (const std::size_t i : rows) s.push_back(supply[i]);
  for (const std::size_t j : cols) d.push_back(demand[j]);
  if (imbalance > 0.0) {
    d.push_back(imbalance);
  } else if (imbalance < 0.0) {
    s.push_back(-imbalance);
  }
  const std::size_t rn = d.size();
  std::vector<double> cost(s.size() * rn, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      cost[i * rn + j] = dist(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
    }
  }
  const std::vector<double> flow = detail::transport_simplex(s, d, cost);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      result.flows(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j])) += flow[i * rn + j];
    }
  }
  return result;
}

/// Total transported work of a plan under a distance matrix.
inline double transport_work(const FlowMatrix& flow, const GroundDistanceMatrix& dist) {
  if (flow.flows.rows() != dist.rows() || flow.flows.cols() != dist.cols())
    throw Error("transport_work: flow and distance shapes differ");
  return (flow.flows.array() * dist.array()).sum();
}

/// Earth Mover's Distance: optimal work normalized by the total moved mass.
/// Identical signatures yield exactly 0.
inline double emd(const Signature& a, const Signature& b) {
  const GroundDistanceMatrix dist = ground_distances(a, b);
  const FlowMatrix flow = solve_transport(a, b, dist);
  assert(flow.total_flow > 0.0);
  return transport_work(flow, dist) / flow.total_flow;
}

}  // namespace gmmcd
