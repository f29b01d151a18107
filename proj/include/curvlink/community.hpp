#pragma once

// I-Louvain: greedy local moves maximizing Q = Q_NG + Q_iner, where Q_iner
// rewards communities that are compact under the manifold distance. Also the
// supernode view that collapses each community into one node.
//
// With D_ij = d(x_i, x_j)^2, a_i = sum_j D_ij, I = sum_i d(x_i, mu)^2 around
// the equal-weight gyromidpoint mu, and T = 2 N I:
//   Q_iner = sum_c [ A_c^2 / T^2 - S_c / T ],
//   A_c = sum_{i in c} a_i,  S_c = sum_{i, j in c} D_ij  (ordered pairs).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/rng.hpp"

namespace curvlink {

struct Partition {
  std::vector<std::size_t> assignment;
  std::size_t count = 0;

  static Partition singletons(std::size_t n) {
    Partition p;
    p.assignment.resize(n);
    std::iota(p.assignment.begin(), p.assignment.end(), std::size_t{0});
    p.count = n;
    return p;
  }

  // Relabels arbitrary ids densely, in order of first appearance.
  static Partition from_labels(const std::vector<std::size_t>& labels) {
    Partition p;
    std::map<std::size_t, std::size_t> dense;
    p.assignment.reserve(labels.size());
    for (std::size_t l : labels) {
      auto [it, fresh] = dense.try_emplace(l, dense.size());
      p.assignment.push_back(it->second);
    }
    p.count = dense.size();
    return p;
  }

  std::size_t size() const noexcept { return assignment.size(); }

  std::vector<std::vector<NodeId>> members() const {
    std::vector<std::vector<NodeId>> out(count);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      out[assignment[i]].push_back(static_cast<NodeId>(i));
    }
    return out;
  }

  void validate(std::size_t n) const {
    if (assignment.size() != n) throw InputError("partition size does not match node count");
    std::vector<char> seen(count, 0);
    for (std::size_t c : assignment) {
      if (c >= count) throw InputError("partition community id out of range");
      seen[c] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw InputError("partition community ids are not dense");
    }
  }
};

// (1/2m) sum_ij (A_ij - d_i d_j / 2m) [c_i == c_j]; 0 for an edgeless layer.
inline double modularity_ng(const Layer& g, const Partition& part) {
  part.validate(g.node_count());
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  if (two_m == 0.0) return 0.0;
  std::vector<double> in(part.count, 0.0), tot(part.count, 0.0);
  for (const Edge& e : g.edges()) {
    if (part.assignment[e.u] == part.assignment[e.v]) in[part.assignment[e.u]] += 2.0;
  }
  for (NodeId u = 0; u < g.node_count(); ++u) {
    tot[part.assignment[u]] += static_cast<double>(g.degree(u));
  }
  double q = 0.0;
  for (std::size_t c = 0; c < part.count; ++c) {
    q += in[c] / two_m - (tot[c] / two_m) * (tot[c] / two_m);
  }
  return q;
}

// Pairwise squared distances and the total inertia about the midpoint.
struct InertiaTable {
  Matrix sq;           // D_ij
  Vector row_sums;     // a_i
  Vector midpoint;     // mu
  double total = 0.0;  // I
};

inline InertiaTable inertia_table(const Matrix& points, Curvature k) {
  const Index n = points.rows();
  if (n < 2) throw InputError("inertia needs at least two points");
  InertiaTable t;
  t.sq = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = kstereo::sqdist(points.row(i).transpose(), points.row(j).transpose(), k);
      t.sq(i, j) = d;
      t.sq(j, i) = d;
    }
  }
  t.row_sums = t.sq.rowwise().sum();
  t.midpoint = kstereo::gyromidpoint(points, Vector::Ones(n), k);
  for (Index i = 0; i < n; ++i) {
    t.total += kstereo::sqdist(points.row(i).transpose(), t.midpoint, k);
  }
  return t;
}

namespace detail {

inline double inertia_from_table(const InertiaTable& t, const Partition& part) {
  if (t.total <= 0.0) return 0.0;
  const auto n = static_cast<double>(t.sq.rows());
  const double scale = 2.0 * n * t.total;
  std::vector<double> a(part.count, 0.0), s(part.count, 0.0);
  for (Index i = 0; i < t.sq.rows(); ++i) {
    const std::size_t ci = part.assignment[i];
    a[ci] += t.row_sums[i];
    for (Index j = 0; j < t.sq.cols(); ++j) {
      if (part.assignment[j] == ci) s[ci] += t.sq(i, j);
    }
  }
  double q = 0.0;
  for (std::size_t c = 0; c < part.count; ++c) {
    q += (a[c] / scale) * (a[c] / scale) - s[c] / scale;
  }
  return q;
}

}  // namespace detail

inline double modularity_inertia(const Matrix& points, Curvature k, const Partition& part) {
  part.validate(static_cast<std::size_t>(points.rows()));
  return detail::inertia_from_table(inertia_table(points, k), part);
}

// Gradient of Q_iner with respect to every point, accumulated into `grad`.
// Returns the value.
inline double modularity_inertia_backward(const Matrix& points, Curvature k,
                                          const Partition& part, double scale_out,
                                          Matrix& grad) {
  part.validate(static_cast<std::size_t>(points.rows()));
  const InertiaTable t = inertia_table(points, k);
  if (t.total <= 0.0) return 0.0;
  const Index n = points.rows();
  const double scale = 2.0 * static_cast<double>(n) * t.total;
  std::vector<double> a(part.count, 0.0), s(part.count, 0.0);
  for (Index i = 0; i < n; ++i) {
    const std::size_t ci = part.assignment[i];
    a[ci] += t.row_sums[i];
    for (Index j = 0; j < n; ++j) {
      if (part.assignment[j] == ci) s[ci] += t.sq(i, j);
    }
  }
  double q = 0.0;
  double dq_dscale = 0.0;
  for (std::size_t c = 0; c < part.count; ++c) {
    q += (a[c] / scale) * (a[c] / scale) - s[c] / scale;
    dq_dscale += -2.0 * a[c] * a[c] / (scale * scale * scale) + s[c] / (scale * scale);
  }

  // D_ij enters a_i and, for same-community pairs, S_c. Each unordered pair
  // is visited once and both ordered entries are folded together.
  Vector gi, gj;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const std::size_t ci = part.assignment[i];
      const std::size_t cj = part.assignment[j];
      double w = 2.0 * a[ci] / (scale * scale) + 2.0 * a[cj] / (scale * scale);
      if (ci == cj) w -= 2.0 / scale;
      w *= scale_out;
      if (w == 0.0) continue;
      kstereo::sqdist(points.row(i).transpose(), points.row(j).transpose(), k, &gi, &gj);
      grad.row(i) += w * gi.transpose();
      grad.row(j) += w * gj.transpose();
    }
  }

  // scale = 2 N I with I = sum_i d(x_i, mu)^2 and mu the midpoint of all x.
  const double w_total = scale_out * dq_dscale * 2.0 * static_cast<double>(n);
  Vector d_mu = Vector::Zero(points.cols());
  for (Index i = 0; i < n; ++i) {
    kstereo::sqdist(points.row(i).transpose(), t.midpoint, k, &gi, &gj);
    grad.row(i) += w_total * gi.transpose();
    d_mu += w_total * gj;
  }
  Vector d_w = Vector::Zero(n);
  kstereo::gyromidpoint_backward(points, Vector::Ones(n), k, d_mu, grad, d_w);
  return q;
}

struct LouvainConfig {
  std::uint64_t seed = 0;
  std::size_t max_passes = 100;
  // Moves must gain more than this; guards against cycling on rounding noise.
  double min_gain = 1e-12;
};

// Local-move phase from singletons over a seeded node order. Each node moves
// to the neighbor community with the largest positive gain. If `trace` is
// given it receives Q after initialization and after every accepted move.
inline Partition i_louvain(const Layer& g, const Matrix& points, Curvature k,
                           const LouvainConfig& cfg = {}, std::vector<double>* trace = nullptr) {
  const std::size_t n = g.node_count();
  if (static_cast<std::size_t>(points.rows()) != n) {
    throw InputError("i_louvain: embedding rows do not match node count");
  }
  Partition part = Partition::singletons(n);
  if (n == 0) return part;

  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  InertiaTable t;
  double scale = 0.0;
  if (n >= 2) {
    t = inertia_table(points, k);
    scale = 2.0 * static_cast<double>(n) * t.total;
  }
  const bool use_ng = two_m > 0.0;
  const bool use_iner = scale > 0.0;

  std::vector<double> in(n, 0.0), tot(n, 0.0), a(n, 0.0), s(n, 0.0);
  for (NodeId u = 0; u < n; ++u) {
    tot[u] = static_cast<double>(g.degree(u));
    if (use_iner) a[u] = t.row_sums[u];
  }
  auto contribution = [&](double in_c, double tot_c, double a_c, double s_c) {
    double q = 0.0;
    if (use_ng) q += in_c / two_m - (tot_c / two_m) * (tot_c / two_m);
    if (use_iner) q += (a_c / scale) * (a_c / scale) - s_c / scale;
    return q;
  };
  double q_now = 0.0;
  if (trace) {
    for (std::size_t c = 0; c < n; ++c) q_now += contribution(in[c], tot[c], a[c], s[c]);
    trace->push_back(q_now);
  }

  Rng rng = make_rng(cfg.seed, 0x10a7a1);
  const auto order = random_permutation(n, rng);
  std::vector<double> link(n, 0.0), dist_to(n, 0.0);
  std::vector<std::size_t> touched;

  for (std::size_t pass = 0; pass < cfg.max_passes; ++pass) {
    bool moved = false;
    for (std::size_t idx : order) {
      const auto u = static_cast<NodeId>(idx);
      if (g.degree(u) == 0) continue;
      const std::size_t from = part.assignment[u];
      const double du = static_cast<double>(g.degree(u));
      const double au = use_iner ? t.row_sums[u] : 0.0;

      touched.clear();
      for (NodeId w : g.neighbors(u)) {
        const std::size_t c = part.assignment[w];
        if (link[c] == 0.0) touched.push_back(c);
        link[c] += 1.0;
      }
      if (link[from] == 0.0) touched.push_back(from);
      if (use_iner) {
        for (std::size_t c : touched) dist_to[c] = 0.0;
        for (NodeId w = 0; w < n; ++w) {
          const std::size_t c = part.assignment[w];
          if (w != u) dist_to[c] += t.sq(u, w);
        }
      }

      // Community `from` without u.
      const double in_from = in[from] - 2.0 * link[from];
      const double tot_from = tot[from] - du;
      const double a_from = a[from] - au;
      const double s_from = s[from] - 2.0 * dist_to[from];
      const double base_from = contribution(in[from], tot[from], a[from], s[from]);
      const double left_from = contribution(in_from, tot_from, a_from, s_from);

      double best_gain = cfg.min_gain;
      std::size_t best = from;
      for (std::size_t c : touched) {
        if (c == from) continue;
        const double before = base_from + contribution(in[c], tot[c], a[c], s[c]);
        const double after = left_from + contribution(in[c] + 2.0 * link[c], tot[c] + du,
                                                      a[c] + au, s[c] + 2.0 * dist_to[c]);
        const double gain = after - before;
        if (gain > best_gain || (gain == best_gain && best != from && c < best)) {
          best_gain = gain;
          best = c;
        }
      }
      if (best != from) {
        in[from] = in_from;
        tot[from] = tot_from;
        a[from] = a_from;
        s[from] = s_from;
        in[best] += 2.0 * link[best];
        tot[best] += du;
        a[best] += au;
        s[best] += 2.0 * dist_to[best];
        part.assignment[u] = best;
        moved = true;
        if (trace) {
          q_now += best_gain;
          trace->push_back(q_now);
        }
      }
      for (std::size_t c : touched) {
        link[c] = 0.0;
        dist_to[c] = 0.0;
      }
    }
    if (!moved) break;
  }
  return Partition::from_labels(part.assignment);
}

struct SupernodeView {
  Partition partition;
  Matrix midpoints;  // row c: equal-weight gyromidpoint of community c
  std::vector<std::size_t> member_counts;
  // Edge multiplicities between distinct communities, keys (a, b) with a < b.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> coarse_edges;
  // Edges inside each community.
  std::vector<std::size_t> internal_edges;
};

inline SupernodeView build_supernode_view(const Layer& g, const Partition& part,
                                          const Matrix& points, Curvature k) {
  part.validate(g.node_count());
  if (static_cast<std::size_t>(points.rows()) != g.node_count()) {
    throw InputError("supernode view: embedding rows do not match node count");
  }
  SupernodeView view;
  view.partition = part;
  view.member_counts.assign(part.count, 0);
  view.internal_edges.assign(part.count, 0);
  view.midpoints.resize(static_cast<Index>(part.count), points.cols());
  const auto groups = part.members();
  for (std::size_t c = 0; c < part.count; ++c) {
    view.member_counts[c] = groups[c].size();
    Matrix pts(static_cast<Index>(groups[c].size()), points.cols());
    for (std::size_t r = 0; r < groups[c].size(); ++r) {
      pts.row(static_cast<Index>(r)) = points.row(groups[c][r]);
    }
    if (groups[c].size() == 1) {
      view.midpoints.row(static_cast<Index>(c)) = pts.row(0);
    } else {
      view.midpoints.row(static_cast<Index>(c)) =
          kstereo::gyromidpoint(pts, Vector::Ones(pts.rows()), k).transpose();
    }
  }
  for (const Edge& e : g.edges()) {
    const std::size_t a = part.assignment[e.u];
    const std::size_t b = part.assignment[e.v];
    if (a == b) {
      ++view.internal_edges[a];
    } else {
      ++view.coarse_edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  return view;
}

}  // namespace curvlink
