#pragma once

// Brute-force reference implementations used as test oracles. These share no
// code with the library beyond the Layer container.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "curvlink/graph.hpp"

namespace curvlink::testing {

// All-pairs hop distances by Floyd-Warshall; unreachable = +inf.
inline std::vector<std::vector<double>> all_pairs_hops(const Layer& g) {
  const std::size_t n = g.node_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const Edge& e : g.edges()) d[e.u][e.v] = d[e.v][e.u] = 1.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Exact transport by vertex enumeration: every vertex of the transportation
// polytope is a basic solution supported on n + m - 1 cells, so the minimum
// over all such cell subsets that yield a feasible solution is the optimum.
inline double transport_by_enumeration(const std::vector<double>& a,
                                       const std::vector<double>& b,
                                       const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const int cells = n * m;
  const int basis = n + m - 1;
  Eigen::VectorXd rhs(n + m);
  for (int i = 0; i < n; ++i) rhs[i] = a[i];
  for (int j = 0; j < m; ++j) rhs[n + j] = b[j];

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(basis);
  for (int i = 0; i < basis; ++i) pick[i] = i;
  for (;;) {
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n + m, basis);
    for (int c = 0; c < basis; ++c) {
      sys(pick[c] / m, c) = 1.0;
      sys(n + pick[c] % m, c) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (lu.rank() == basis) {
      const Eigen::VectorXd f = lu.solve(rhs);
      if ((sys * f - rhs).cwiseAbs().maxCoeff() < 1e-12 && f.minCoeff() > -1e-12) {
        double total = 0.0;
        for (int c = 0; c < basis; ++c) total += f[c] * cost(pick[c] / m, pick[c] % m);
        best = std::min(best, total);
      }
    }
    int k = basis - 1;
    while (k >= 0 && pick[k] == cells - basis + k) --k;
    if (k < 0) break;
    ++pick[k];
    for (int i = k + 1; i < basis; ++i) pick[i] = pick[i - 1] + 1;
  }
  return best;
}

// Lazy-walk measure written out densely.
inline std::vector<double> dense_lazy_walk(const Layer& g, NodeId u, double alpha) {
  std::vector<double> m(g.node_count(), 0.0);
  const auto nb = g.neighbors(u);
  if (nb.empty()) {
    m[u] = 1.0;
    return m;
  }
  m[u] = alpha;
  for (NodeId w : nb) m[w] += (1.0 - alpha) / static_cast<double>(nb.size());
  return m;
}

inline double oracle_ricci_edge(const Layer& g, NodeId i, NodeId j, double alpha) {
  const auto d = all_pairs_hops(g);
  const auto mi = dense_lazy_walk(g, i, alpha);
  const auto mj = dense_lazy_walk(g, j, alpha);
  std::vector<NodeId> si, sj;
  std::vector<double> a, b;
  for (NodeId u = 0; u < g.node_count(); ++u) {
    if (mi[u] > 0.0) {
      si.push_back(u);
      a.push_back(mi[u]);
    }
    if (mj[u] > 0.0) {
      sj.push_back(u);
      b.push_back(mj[u]);
    }
  }
  Eigen::MatrixXd cost(si.size(), sj.size());
  for (std::size_t p = 0; p < si.size(); ++p)
    for (std::size_t q = 0; q < sj.size(); ++q) cost(p, q) = d[si[p]][sj[q]];
  return 1.0 - transport_by_enumeration(a, b, cost) / d[i][j];
}

// Four-point delta over every quadruple of the graph (assumed connected).
inline double exhaustive_delta(const Layer& g) {
  const auto d = all_pairs_hops(g);
  const std::size_t n = g.node_count();
  double best = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c)
        for (std::size_t e = c + 1; e < n; ++e) {
          std::vector<double> s{d[a][b] + d[c][e], d[a][c] + d[b][e], d[a][e] + d[b][c]};
          std::sort(s.begin(), s.end());
          best = std::max(best, (s[2] - s[1]) / 2.0);
        }
  return best;
}

}  // namespace curvlink::testing
