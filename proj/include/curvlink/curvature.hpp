#pragma once

// Ollivier-Ricci curvature on edges and nodes, per-layer constant-curvature
// summarization, and a sampled Gromov four-point diagnostic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/parallel.hpp"
#include "curvlink/rng.hpp"
#include "curvlink/transport.hpp"

namespace curvlink {

// Mean node curvature below this magnitude maps to the flat geometry.
inline constexpr double kFlatDeadZone = 0.01;

struct RicciConfig {
  double alpha = 0.5;
  std::size_t sample_count = 512;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw DomainError("ricci alpha must lie in [0, 1]");
    }
    if (sample_count == 0) throw DomainError("ricci sample_count must be positive");
  }
};

struct CurvatureEstimate {
  std::map<NodeId, double> node_values;
  Curvature kappa;
  std::vector<NodeId> sampled_nodes;
  double mean = 0.0;
};

// Sparse probability vector, sorted by node id, zero entries omitted.
using SparseDistribution = std::vector<std::pair<NodeId, double>>;

inline SparseDistribution mass_distribution(const Layer& g, NodeId u, double alpha) {
  if (u >= g.node_count()) throw InputError("mass_distribution: node out of range");
  const auto nbrs = g.neighbors(u);
  if (nbrs.empty() || alpha == 1.0) return {{u, 1.0}};
  const double share = (1.0 - alpha) / static_cast<double>(nbrs.size());
  SparseDistribution out;
  out.reserve(nbrs.size() + 1);
  bool placed = alpha == 0.0;
  for (NodeId w : nbrs) {
    if (!placed && u < w) {
      out.emplace_back(u, alpha);
      placed = true;
    }
    out.emplace_back(w, share);
  }
  if (!placed) out.emplace_back(u, alpha);
  return out;
}

namespace detail {

inline std::vector<double> masses(const SparseDistribution& d) {
  std::vector<double> m;
  m.reserve(d.size());
  for (const auto& [node, mass] : d) m.push_back(mass);
  return m;
}

inline void check_distribution(const Layer& g, const SparseDistribution& d, const char* what) {
  double total = 0.0;
  for (const auto& [node, mass] : d) {
    if (node >= g.node_count()) throw InputError(std::string(what) + ": node out of range");
    if (!(mass >= 0.0)) throw InputError(std::string(what) + ": negative mass");
    total += mass;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InputError(std::string(what) + ": masses do not sum to 1");
  }
}

// Transport cost between two distributions with hop distances from BFS
// rooted at each source support node, truncated at max_depth.
inline double transport_cost(const Layer& g, const SparseDistribution& mu,
                             const SparseDistribution& nu, int max_depth) {
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(mu.size()),
                       static_cast<Eigen::Index>(nu.size()));
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const auto dist = bfs_distances(g, mu[a].first, max_depth);
    for (std::size_t b = 0; b < nu.size(); ++b) {
      const int d = dist[nu[b].first];
      if (d == kUnreachable) {
        throw InputError("wasserstein: supports lie in different components");
      }
      cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d;
    }
  }
  const auto a = masses(mu);
  const auto b = masses(nu);
  return solve_transport(a, b, cost).cost;
}

}  // namespace detail

// Exact W1 under hop-count ground cost.
inline double wasserstein(const Layer& g, const SparseDistribution& mu,
                          const SparseDistribution& nu) {
  detail::check_distribution(g, mu, "wasserstein");
  detail::check_distribution(g, nu, "wasserstein");
  return detail::transport_cost(g, mu, nu, std::numeric_limits<int>::max());
}

inline double ollivier_ricci_edge(const Layer& g, NodeId i, NodeId j, double alpha) {
  if (i >= g.node_count() || j >= g.node_count() || !g.has_edge(i, j)) {
    throw InputError("ollivier_ricci_edge: (" + std::to_string(i) + ", " +
                     std::to_string(j) + ") is not an edge");
  }
  if (alpha == 1.0) return 0.0;
  // Supports sit within one hop of i or j, so no route exceeds three hops.
  const auto mi = mass_distribution(g, i, alpha);
  const auto mj = mass_distribution(g, j, alpha);
  return 1.0 - detail::transport_cost(g, mi, mj, 3);
}

inline double node_ricci(const Layer& g, NodeId i, double alpha) {
  if (i >= g.node_count()) throw InputError("node_ricci: node out of range");
  const auto nbrs = g.neighbors(i);
  if (nbrs.empty()) {
    throw DomainError("node_ricci: curvature undefined at isolated node " + std::to_string(i));
  }
  double sum = 0.0;
  for (NodeId w : nbrs) sum += ollivier_ricci_edge(g, i, w, alpha);
  return sum / static_cast<double>(nbrs.size());
}

inline Curvature summarize_kappa(double mean) {
  if (!std::isfinite(mean)) throw NumericError("summarize_kappa: non-finite mean");
  if (std::abs(mean) < kFlatDeadZone) return Curvature(0.0);
  return Curvature(std::clamp(mean, -kKappaMax, kKappaMax));
}

inline CurvatureEstimate estimate_kappa(const Layer& g, const RicciConfig& cfg,
                                        std::size_t threads = 1) {
  cfg.validate();
  CurvatureEstimate est;
  Rng rng = make_rng(cfg.seed, 0x52494343ULL);
  for (std::size_t s : sample_without_replacement(g.node_count(), cfg.sample_count, rng)) {
    est.sampled_nodes.push_back(static_cast<NodeId>(s));
  }

  // Edge curvatures are computed once each, over the sorted edge set.
  std::vector<Edge> needed;
  for (NodeId u : est.sampled_nodes) {
    for (NodeId w : g.neighbors(u)) needed.push_back(Edge::make(u, w));
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  if (needed.empty()) throw DomainError("estimate_kappa: all sampled nodes are isolated");
  std::vector<double> edge_value(needed.size());
  parallel_for(needed.size(), threads, [&](std::size_t e) {
    edge_value[e] = ollivier_ricci_edge(g, needed[e].u, needed[e].v, cfg.alpha);
  });
  auto lookup = [&](NodeId a, NodeId b) {
    const Edge key = Edge::make(a, b);
    return edge_value[static_cast<std::size_t>(
        std::lower_bound(needed.begin(), needed.end(), key) - needed.begin())];
  };

  for (NodeId u : est.sampled_nodes) {
    const auto nbrs = g.neighbors(u);
    if (nbrs.empty()) continue;
    double sum = 0.0;
    for (NodeId w : nbrs) sum += lookup(u, w);
    est.node_values[u] = sum / static_cast<double>(nbrs.size());
  }
  double total = 0.0;
  for (const auto& [node, value] : est.node_values) total += value;
  est.mean = total / static_cast<double>(est.node_values.size());
  est.kappa = summarize_kappa(est.mean);
  return est;
}

// Four-point delta of one quadruple given its six pairwise distances.
inline double four_point_delta(double dab, double dcd, double dac, double dbd, double dad,
                               double dbc) {
  double s[3] = {dab + dcd, dac + dbd, dad + dbc};
  std::sort(s, s + 3);
  return (s[2] - s[1]) / 2.0;
}

// Maximum four-point delta over sampled quadruples of the largest component.
inline double delta_hyperbolicity(const Layer& g, std::size_t quadruple_samples,
                                  std::uint64_t seed) {
  if (quadruple_samples == 0) throw DomainError("delta_hyperbolicity: samples must be positive");
  std::size_t count = 0;
  const auto comp = connected_components(g, &count);
  std::vector<std::size_t> size(count, 0);
  for (std::size_t c : comp) ++size[c];
  const std::size_t largest = static_cast<std::size_t>(
      std::max_element(size.begin(), size.end()) - size.begin());
  std::vector<NodeId> nodes;
  for (NodeId u = 0; u < g.node_count(); ++u) {
    if (comp[u] == largest) nodes.push_back(u);
  }
  if (nodes.size() < 4) {
    throw InputError("delta_hyperbolicity: needs at least 4 connected nodes");
  }
  Rng rng = make_rng(seed, 0x44454c54ULL);
  double delta = 0.0;
  for (std::size_t s = 0; s < quadruple_samples; ++s) {
    const auto pick = sample_without_replacement(nodes.size(), 4, rng);
    const NodeId a = nodes[pick[0]], b = nodes[pick[1]], c = nodes[pick[2]], d = nodes[pick[3]];
    const auto da = bfs_distances(g, a);
    const auto db = bfs_distances(g, b);
    const auto dc = bfs_distances(g, c);
    delta = std::max(delta, four_point_delta(da[b], dc[d], da[c], db[d], da[d], db[c]));
  }
  return delta;
}

}  // namespace curvlink
