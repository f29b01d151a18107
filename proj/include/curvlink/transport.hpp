#pragma once

// Exact discrete optimal transport for small supports.
//
// Solves  min sum_ij c_ij f_ij  s.t.  sum_j f_ij = a_i, sum_i f_ij = b_j,
// f >= 0  by successive shortest augmenting paths on the residual network
// S -> sources -> sinks -> T. Path search is Bellman-Ford, which tolerates the
// negative reduced costs of reverse arcs; supports here are a node's closed
// neighborhood, so the network has a few dozen vertices at most.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "curvlink/error.hpp"

namespace curvlink {

struct TransportPlan {
  double cost = 0.0;
  Eigen::MatrixXd flow;  // rows: sources, cols: sinks
};

inline TransportPlan solve_transport(std::span<const double> supply,
                                     std::span<const double> demand,
                                     const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(supply.size());
  const auto m = static_cast<int>(demand.size());
  if (cost.rows() != n || cost.cols() != m) {
    throw InputError("solve_transport: cost matrix shape mismatch");
  }
  constexpr double kTiny = 1e-14;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  TransportPlan plan;
  plan.flow = Eigen::MatrixXd::Zero(n, m);
  std::vector<double> left_supply(supply.begin(), supply.end());
  std::vector<double> left_demand(demand.begin(), demand.end());

  // Vertex layout: 0 = S, 1..n sources, n+1..n+m sinks, n+m+1 = T.
  const int vs = 0;
  const int vt = n + m + 1;
  const int nv = n + m + 2;
  std::vector<double> dist(nv);
  std::vector<int> prev(nv);

  for (;;) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    dist[vs] = 0.0;
    // Bellman-Ford over the implicit residual arcs.
    for (int round = 0; round < nv; ++round) {
      bool changed = false;
      auto relax = [&](int from, int to, double w) {
        if (dist[from] + w < dist[to] - 1e-12) {
          dist[to] = dist[from] + w;
          prev[to] = from;
          changed = true;
        }
      };
      for (int i = 0; i < n; ++i) {
        if (left_supply[i] > kTiny) relax(vs, 1 + i, 0.0);
        if (dist[1 + i] == kInf) continue;
        for (int j = 0; j < m; ++j) relax(1 + i, 1 + n + j, cost(i, j));
      }
      for (int j = 0; j < m; ++j) {
        const int vj = 1 + n + j;
        if (dist[vj] == kInf) continue;
        if (left_demand[j] > kTiny) relax(vj, vt, 0.0);
        for (int i = 0; i < n; ++i) {
          if (plan.flow(i, j) > kTiny) relax(vj, 1 + i, -cost(i, j));
        }
      }
      if (!changed) break;
    }
    if (dist[vt] == kInf) break;

    // Bottleneck along the path.
    double push = kInf;
    for (int v = vt; v != vs; v = prev[v]) {
      const int u = prev[v];
      if (u == vs) {
        push = std::min(push, left_supply[v - 1]);
      } else if (v == vt) {
        push = std::min(push, left_demand[u - 1 - n]);
      } else if (u > n) {  // reverse arc sink -> source
        push = std::min(push, plan.flow(v - 1, u - 1 - n));
      }
    }
    for (int v = vt; v != vs; v = prev[v]) {
      const int u = prev[v];
      if (u == vs) {
        left_supply[v - 1] -= push;
      } else if (v == vt) {
        left_demand[u - 1 - n] -= push;
      } else if (u > n) {
        plan.flow(v - 1, u - 1 - n) -= push;
      } else {
        plan.flow(u - 1, v - 1 - n) += push;
      }
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) plan.cost += plan.flow(i, j) * cost(i, j);
  return plan;
}

}  // namespace curvlink
