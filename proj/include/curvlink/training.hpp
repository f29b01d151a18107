#pragma once

// Contrastive objectives, optimizers and the alternating training loop.
//
// All similarities are inner products of tangent coordinates at the origin,
// divided by the temperature. With S = U V^T / tau:
//   node-node      (1/2N) sum_i [ lse_j S_ij - S_ii + lse_j S_ji - S_ii ]
//                  over two dropout views U, V of the same batch;
//   node-supernode (1/K) sum_c mean_{i in c} [ lse_g (u_i . s_g)/tau - (u_i . s_c)/tau ]
//                  against the frozen community midpoints s_g;
//   inter          (1/2|D|) sum_(s,t) [ l(s -> all targets) + l(t -> all sources) ].
// The minimized objective is  sum_layers (L_in + L_n2s) + L_er + sign * alpha_q * Q,
// with sign = -1 by default so that higher modularity lowers the objective.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curvlink/community.hpp"
#include "curvlink/error.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/model.hpp"
#include "curvlink/rng.hpp"

namespace curvlink {

struct LossConfig {
  double alpha_q = 10.0;
  double tau = 1.0;
  double q_sign = -1.0;

  void validate() const {
    if (!(alpha_q >= 0.0)) throw DomainError("alpha_q must be non-negative");
    if (!(tau > 0.0)) throw DomainError("temperature must be positive");
    if (q_sign != 1.0 && q_sign != -1.0) throw DomainError("q_sign must be +1 or -1");
  }
};

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 3000;
  std::size_t alternations = 5;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
    if (batch_size < 2) throw DomainError("batch size must be at least 2");
  }
};

// ---------------------------------------------------------------------------
// Similarity and losses on tangent coordinates.

inline double sim_kappa(const ManifoldPoint& x, const ManifoldPoint& y, double tau = 1.0) {
  return kstereo::log0(x.coords(), x.curvature()).dot(kstereo::log0(y.coords(), y.curvature())) /
         tau;
}

namespace detail {

// Row-wise log-sum-exp and softmax.
inline Vector row_lse(const Matrix& s, Matrix* softmax) {
  Vector out(s.rows());
  if (softmax) softmax->resize(s.rows(), s.cols());
  for (Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j < s.cols(); ++j) total += std::exp(s(i, j) - mx);
    out[i] = mx + std::log(total);
    if (softmax) {
      for (Index j = 0; j < s.cols(); ++j) (*softmax)(i, j) = std::exp(s(i, j) - out[i]);
    }
  }
  return out;
}

inline void accumulate(Matrix* target, const Matrix& delta) {
  if (target) *target += delta;
}

}  // namespace detail

// Rows of u and v are the same nodes seen through two views.
inline double loss_node_node(const Matrix& u, const Matrix& v, double tau,
                             Matrix* grad_u = nullptr, Matrix* grad_v = nullptr) {
  const Index n = u.rows();
  if (n < 2) throw DomainError("node-node loss needs at least two nodes in the batch");
  if (v.rows() != n || v.cols() != u.cols()) throw DomainError("node-node views differ in shape");
  const Matrix s = u * v.transpose() / tau;
  Matrix p_row, p_col;
  const Vector lse_row = detail::row_lse(s, grad_u || grad_v ? &p_row : nullptr);
  const Matrix st = s.transpose();
  const Vector lse_col = detail::row_lse(st, grad_u || grad_v ? &p_col : nullptr);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) loss += lse_row[i] - s(i, i) + lse_col[i] - s(i, i);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  if (grad_u || grad_v) {
    // dL/dS = scale * [(P_row - I) + (P_col^T - I)].
    Matrix ds = p_row + p_col.transpose();
    ds.diagonal().array() -= 2.0;
    ds *= scale / tau;
    detail::accumulate(grad_u, ds * v);
    detail::accumulate(grad_v, ds.transpose() * u);
  }
  return loss * scale;
}

// `community[i]` indexes the rows of `midpoints` (tangent coordinates).
inline double loss_node_supernode(const Matrix& u, std::span<const std::size_t> community,
                                  const Matrix& midpoints, double tau, Matrix* grad_u = nullptr) {
  const Index n = u.rows();
  const Index k = midpoints.rows();
  if (k < 2) throw DomainError("node-supernode loss needs at least two communities");
  if (static_cast<Index>(community.size()) != n) throw DomainError("community labels size mismatch");
  std::vector<double> members(static_cast<std::size_t>(k), 0.0);
  for (std::size_t c : community) {
    if (c >= static_cast<std::size_t>(k)) throw DomainError("community label out of range");
    members[c] += 1.0;
  }
  std::size_t present = 0;
  for (double m : members) present += m > 0.0;

  const Matrix s = u * midpoints.transpose() / tau;
  Matrix p;
  const Vector lse = detail::row_lse(s, grad_u ? &p : nullptr);
  double loss = 0.0;
  Matrix ds;
  if (grad_u) ds = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    const std::size_t c = community[static_cast<std::size_t>(i)];
    const double w = 1.0 / (members[c] * static_cast<double>(present));
    loss += w * (lse[i] - s(i, static_cast<Index>(c)));
    if (grad_u) {
      ds.row(i) = w * p.row(i);
      ds(i, static_cast<Index>(c)) -= w;
    }
  }
  if (grad_u) *grad_u += ds * midpoints / tau;
  return loss;
}

// Pairs are (row in us, row in ut). Candidates are all rows of the other side.
inline double loss_inter(const Matrix& us, const Matrix& ut,
                         std::span<const std::pair<Index, Index>> pairs, double tau,
                         Matrix* grad_s = nullptr, Matrix* grad_t = nullptr) {
  if (pairs.empty()) return 0.0;
  if (us.rows() < 2 || ut.rows() < 2) throw DomainError("inter loss needs two candidates per side");
  const bool grad = grad_s || grad_t;
  Matrix xs(static_cast<Index>(pairs.size()), us.cols());
  Matrix xt(static_cast<Index>(pairs.size()), ut.cols());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    xs.row(static_cast<Index>(a)) = us.row(pairs[a].first);
    xt.row(static_cast<Index>(a)) = ut.row(pairs[a].second);
  }
  const Matrix s_fwd = xs * ut.transpose() / tau;  // anchors x all targets
  const Matrix s_bwd = xt * us.transpose() / tau;  // anchors x all sources
  Matrix p_fwd, p_bwd;
  const Vector lse_fwd = detail::row_lse(s_fwd, grad ? &p_fwd : nullptr);
  const Vector lse_bwd = detail::row_lse(s_bwd, grad ? &p_bwd : nullptr);
  const double scale = 1.0 / (2.0 * static_cast<double>(pairs.size()));
  double loss = 0.0;
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto ia = static_cast<Index>(a);
    loss += lse_fwd[ia] - s_fwd(ia, pairs[a].second) + lse_bwd[ia] - s_bwd(ia, pairs[a].first);
  }
  if (grad) {
    Matrix d_fwd = p_fwd * (scale / tau);
    Matrix d_bwd = p_bwd * (scale / tau);
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      d_fwd(static_cast<Index>(a), pairs[a].second) -= scale / tau;
      d_bwd(static_cast<Index>(a), pairs[a].first) -= scale / tau;
    }
    // s_fwd = xs ut^T: d xs = d_fwd ut, d ut = d_fwd^T xs.
    const Matrix d_xs = d_fwd * ut;
    const Matrix d_xt = d_bwd * us;
    if (grad_t) *grad_t += d_fwd.transpose() * xs;
    if (grad_s) *grad_s += d_bwd.transpose() * xt;
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      if (grad_s) grad_s->row(pairs[a].first) += d_xs.row(static_cast<Index>(a));
      if (grad_t) grad_t->row(pairs[a].second) += d_xt.row(static_cast<Index>(a));
    }
  }
  return loss * scale;
}

struct ObjectiveParts {
  std::array<double, 2> l_in{0.0, 0.0};
  std::array<double, 2> l_n2s{0.0, 0.0};
  std::array<double, 2> q{0.0, 0.0};
  double l_er = 0.0;
};

inline double total_objective(const ObjectiveParts& p, const LossConfig& cfg) {
  const std::pair<const char*, double> named[] = {
      {"L_in[source]", p.l_in[0]},   {"L_in[target]", p.l_in[1]}, {"L_n2s[source]", p.l_n2s[0]},
      {"L_n2s[target]", p.l_n2s[1]}, {"L_er", p.l_er},            {"Q[source]", p.q[0]},
      {"Q[target]", p.q[1]}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) {
      throw DivergenceError(std::string("objective component ") + name + " is not finite");
    }
  }
  return p.l_in[0] + p.l_in[1] + p.l_n2s[0] + p.l_n2s[1] + p.l_er +
         cfg.q_sign * cfg.alpha_q * (p.q[0] + p.q[1]);
}

// ---------------------------------------------------------------------------
// Objective evaluation with gradients through the encoder.

// Frozen per-alternation community structure of one network.
struct CommunityState {
  Partition partition;
  Matrix midpoint_tangent;  // K x d
  double q_ng = 0.0;
};

inline CommunityState make_community_state(const Layer& g, const Matrix& embeddings, Curvature k,
                                           const LouvainConfig& cfg) {
  CommunityState s;
  s.partition = i_louvain(g, embeddings, k, cfg);
  const SupernodeView view = build_supernode_view(g, s.partition, embeddings, k);
  s.midpoint_tangent = detail::rowwise_log0(view.midpoints, k);
  s.q_ng = modularity_ng(g, s.partition);
  return s;
}

// Node subsets used for one step. Empty means every node.
struct Batch {
  std::array<std::vector<NodeId>, 2> nodes;
};

inline Batch sample_batch(const Encoder& enc, std::size_t batch_size, Rng& rng) {
  Batch b;
  for (int n = 0; n < 2; ++n) {
    const std::size_t count = enc.graph(n).node_count();
    if (count <= batch_size) continue;
    for (std::size_t i : sample_without_replacement(count, batch_size, rng)) {
      b.nodes[n].push_back(static_cast<NodeId>(i));
    }
    std::sort(b.nodes[n].begin(), b.nodes[n].end());
  }
  return b;
}

namespace detail {

inline std::vector<NodeId> batch_rows(const Batch& b, int n, std::size_t count) {
  if (!b.nodes[n].empty()) return b.nodes[n];
  std::vector<NodeId> all(count);
  std::iota(all.begin(), all.end(), NodeId{0});
  return all;
}

inline Matrix gather(const Matrix& m, const std::vector<NodeId>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

inline void scatter_add(Matrix& m, const std::vector<NodeId>& rows, const Matrix& delta) {
  for (std::size_t r = 0; r < rows.size(); ++r) m.row(rows[r]) += delta.row(static_cast<Index>(r));
}

// d(log_0 H) -> dH, row by row.
inline Matrix log0_backward(const Matrix& h, Curvature k, const Matrix& d_tangent) {
  Matrix out(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i) {
    const Vector x = h.row(i).transpose();
    out.row(i) = kstereo::radial_backward(x, kstereo::log0_factor(x.norm(), k),
                                          d_tangent.row(i).transpose())
                     .transpose();
  }
  return out;
}

}  // namespace detail

// Intra objective  sum_n [L_in + L_n2s + sign alpha_q Q]  with two dropout
// views drawn from `dropout_seed`. Communities with a single supernode skip
// L_n2s. Gradients are accumulated into `grad` when given.
inline ObjectiveParts intra_objective(const Encoder& enc, const EncoderParams& params,
                                      const std::array<CommunityState, 2>& communities,
                                      const Batch& batch, const LossConfig& cfg,
                                      std::uint64_t dropout_seed, EncoderParams* grad = nullptr) {
  ObjectiveParts parts;
  Rng rng_a = make_rng(dropout_seed, 1);
  Rng rng_b = make_rng(dropout_seed, 2);
  ForwardCache cache_a, cache_b;
  const auto h_a = enc.forward(params, Mode::train, &rng_a, grad ? &cache_a : nullptr);
  const auto h_b = enc.forward(params, Mode::train, &rng_b, grad ? &cache_b : nullptr);
  std::array<Matrix, 2> d_ha, d_hb;
  for (int n = 0; n < 2; ++n) {
    const Curvature k = enc.kappa(n);
    const auto rows = detail::batch_rows(batch, n, enc.graph(n).node_count());
    const Matrix t_a = detail::rowwise_log0(h_a[n], k);
    const Matrix t_b = detail::rowwise_log0(h_b[n], k);
    const Matrix u = detail::gather(t_a, rows);
    const Matrix v = detail::gather(t_b, rows);
    Matrix gu = Matrix::Zero(u.rows(), u.cols());
    Matrix gv = Matrix::Zero(v.rows(), v.cols());
    parts.l_in[n] = loss_node_node(u, v, cfg.tau, grad ? &gu : nullptr, grad ? &gv : nullptr);

    const CommunityState& cs = communities[n];
    std::vector<std::size_t> labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = cs.partition.assignment[rows[r]];
    if (cs.partition.count >= 2) {
      parts.l_n2s[n] =
          loss_node_supernode(u, labels, cs.midpoint_tangent, cfg.tau, grad ? &gu : nullptr);
    }

    Matrix d_points = Matrix::Zero(static_cast<Index>(rows.size()), h_a[n].cols());
    const Matrix pts = detail::gather(h_a[n], rows);
    const Partition sub = Partition::from_labels(labels);
    double q_iner = 0.0;
    const double weight = cfg.q_sign * cfg.alpha_q;
    if (grad && weight != 0.0) {
      q_iner = modularity_inertia_backward(pts, k, sub, weight, d_points);
    } else {
      q_iner = modularity_inertia(pts, k, sub);
    }
    parts.q[n] = cs.q_ng + q_iner;

    if (grad) {
      Matrix d_ta = Matrix::Zero(t_a.rows(), t_a.cols());
      Matrix d_tb = Matrix::Zero(t_b.rows(), t_b.cols());
      detail::scatter_add(d_ta, rows, gu);
      detail::scatter_add(d_tb, rows, gv);
      d_ha[n] = detail::log0_backward(h_a[n], k, d_ta);
      detail::scatter_add(d_ha[n], rows, d_points);
      d_hb[n] = detail::log0_backward(h_b[n], k, d_tb);
    }
  }
  if (grad) {
    enc.backward(params, cache_a, d_ha, *grad);
    enc.backward(params, cache_b, d_hb, *grad);
  }
  return parts;
}

// Inter objective over the given anchors with one dropout view.
inline double inter_objective(const Encoder& enc, const EncoderParams& params,
                              std::span<const AnchorPair> anchors, const Batch& batch,
                              const LossConfig& cfg, std::uint64_t dropout_seed,
                              EncoderParams* grad = nullptr) {
  if (anchors.empty()) return 0.0;
  Rng rng = make_rng(dropout_seed, 3);
  ForwardCache cache;
  const auto h = enc.forward(params, Mode::train, &rng, grad ? &cache : nullptr);
  std::array<std::vector<NodeId>, 2> rows;
  std::array<std::vector<std::int64_t>, 2> where;
  for (int n = 0; n < 2; ++n) {
    rows[n] = detail::batch_rows(batch, n, enc.graph(n).node_count());
    where[n].assign(enc.graph(n).node_count(), -1);
    for (std::size_t r = 0; r < rows[n].size(); ++r) where[n][rows[n][r]] = static_cast<std::int64_t>(r);
  }
  // Anchor endpoints always join the candidate sets.
  for (const AnchorPair& a : anchors) {
    if (where[0][a.source] < 0) {
      where[0][a.source] = static_cast<std::int64_t>(rows[0].size());
      rows[0].push_back(a.source);
    }
    if (where[1][a.target] < 0) {
      where[1][a.target] = static_cast<std::int64_t>(rows[1].size());
      rows[1].push_back(a.target);
    }
  }
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(anchors.size());
  for (const AnchorPair& a : anchors) pairs.emplace_back(where[0][a.source], where[1][a.target]);

  const std::array<Matrix, 2> t{detail::rowwise_log0(h[0], enc.kappa(0)),
                                detail::rowwise_log0(h[1], enc.kappa(1))};
  const Matrix us = detail::gather(t[0], rows[0]);
  const Matrix ut = detail::gather(t[1], rows[1]);
  Matrix gs = Matrix::Zero(us.rows(), us.cols());
  Matrix gt = Matrix::Zero(ut.rows(), ut.cols());
  const double loss = loss_inter(us, ut, pairs, cfg.tau, grad ? &gs : nullptr, grad ? &gt : nullptr);
  if (grad) {
    std::array<Matrix, 2> d_t{Matrix::Zero(t[0].rows(), t[0].cols()),
                              Matrix::Zero(t[1].rows(), t[1].cols())};
    detail::scatter_add(d_t[0], rows[0], gs);
    detail::scatter_add(d_t[1], rows[1], gt);
    std::array<Matrix, 2> d_h{detail::log0_backward(h[0], enc.kappa(0), d_t[0]),
                              detail::log0_backward(h[1], enc.kappa(1), d_t[1])};
    enc.backward(params, cache, d_h, *grad);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimizers.

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Moments {
  Matrix m;
  Matrix v;
};

// Plain Adam on a Euclidean tensor; `step` counts from 1.
inline void adam_update(Matrix& x, const Matrix& g, Moments& mom, std::size_t step,
                        const AdamConfig& cfg) {
  if (mom.m.size() == 0) {
    mom.m = Matrix::Zero(x.rows(), x.cols());
    mom.v = Matrix::Zero(x.rows(), x.cols());
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double gij = g(i, j);
      mom.m(i, j) = cfg.beta1 * mom.m(i, j) + (1.0 - cfg.beta1) * gij;
      mom.v(i, j) = cfg.beta2 * mom.v(i, j) + (1.0 - cfg.beta2) * gij * gij;
      const double mh = mom.m(i, j) / c1;
      const double vh = mom.v(i, j) / c2;
      x(i, j) = x(i, j) - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

// Riemannian Adam on rows that are points at curvature k. The flat gradient
// is rescaled by the inverse metric (lambda/2)^-2; moments stay in flat
// coordinates (no parallel transport) and the step retracts with exp_x.
inline void riemannian_adam_update(Matrix& x, const Matrix& g, Moments& mom, std::size_t step,
                                   Curvature k, const AdamConfig& cfg) {
  if (mom.m.size() == 0) {
    mom.m = Matrix::Zero(x.rows(), x.cols());
    mom.v = Matrix::Zero(x.rows(), x.cols());
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  Vector delta(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    const double half = kstereo::conformal_factor(xi, k) / 2.0;
    const double metric = half * half;
    for (Index j = 0; j < x.cols(); ++j) {
      const double rg = g(i, j) / metric;
      mom.m(i, j) = cfg.beta1 * mom.m(i, j) + (1.0 - cfg.beta1) * rg;
      mom.v(i, j) = cfg.beta2 * mom.v(i, j) + (1.0 - cfg.beta2) * rg * rg;
      const double mh = mom.m(i, j) / c1;
      const double vh = mom.v(i, j) / c2;
      delta[j] = -(cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    x.row(i) = kstereo::exp_map(xi, delta, k).transpose();
  }
}

// One optimizer over every trainable tensor of the encoder.
class Optimizer {
 public:
  explicit Optimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(EncoderParams& params, const EncoderParams& grad, const std::array<Curvature, 2>& k) {
    ++step_;
    std::vector<const Matrix*> grads;
    grad.for_each([&](const std::string&, const Matrix& g, TensorKind, int) { grads.push_back(&g); });
    std::size_t idx = 0;
    if (moments_.empty()) moments_.resize(grads.size());
    params.for_each([&](const std::string&, Matrix& x, TensorKind kind, int n) {
      const Matrix& g = *grads[idx];
      Moments& mom = moments_[idx];
      ++idx;
      if (kind == TensorKind::fixed) return;
      if (!g.allFinite()) throw DivergenceError("non-finite gradient");
      if (kind == TensorKind::manifold) {
        riemannian_adam_update(x, g, mom, step_, k[n], cfg_);
      } else {
        adam_update(x, g, mom, step_, cfg_);
      }
    });
  }

  std::size_t steps() const noexcept { return step_; }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Moments> moments_;
};

// ---------------------------------------------------------------------------
// Alternating training loop.

struct HistoryRow {
  std::size_t alternation = 0;
  std::size_t epoch = 0;  // global epoch counter, from 1
  ObjectiveParts parts;
  std::array<std::size_t, 2> communities{0, 0};
  double total = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::array<Matrix, 2> embeddings;
  std::vector<HistoryRow> history;
  std::vector<std::string> warnings;
  // Set when a non-finite value stopped training; `params` then holds the
  // last parameters whose objective was finite.
  std::optional<std::string> divergence;
};

inline TrainResult train(const Encoder& enc, EncoderParams init, const LossConfig& loss_cfg,
                         const TrainConfig& cfg) {
  loss_cfg.validate();
  cfg.validate();
  TrainResult out;
  out.params = std::move(init);
  const std::array<Curvature, 2> kappa{enc.kappa(0), enc.kappa(1)};
  const auto& anchors = enc.anchors();
  if (anchors.empty() && cfg.alternations > 0) {
    out.warnings.push_back("no training anchors; inter-network loss is 0");
  }
  Optimizer intra_opt(AdamConfig{.lr = cfg.lr});
  Optimizer inter_opt(AdamConfig{.lr = cfg.lr});
  std::size_t epoch_counter = 0;

  try {
    for (std::size_t alt = 0; alt < cfg.alternations; ++alt) {
      const auto h = enc.forward(out.params, Mode::eval);
      std::array<CommunityState, 2> communities;
      for (int n = 0; n < 2; ++n) {
        communities[n] = make_community_state(
            enc.graph(n), h[n], kappa[n],
            {.seed = derive_seed(cfg.seed, 0x1000 + 2 * alt + static_cast<std::uint64_t>(n))});
        if (communities[n].partition.count < 2) {
          out.warnings.push_back(std::string(kNetworkNames[n]) + " alternation " +
                                 std::to_string(alt + 1) +
                                 ": single community, node-supernode loss skipped");
        }
      }
      for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
        ++epoch_counter;
        const std::uint64_t stream = 0x100000 + 4 * epoch_counter;
        Rng batch_rng = make_rng(cfg.seed, stream);
        const Batch batch = sample_batch(enc, cfg.batch_size, batch_rng);

        EncoderParams g_intra = out.params.zeros_like();
        HistoryRow row;
        row.alternation = alt + 1;
        row.epoch = epoch_counter;
        row.parts = intra_objective(enc, out.params, communities, batch, loss_cfg,
                                    derive_seed(cfg.seed, stream + 1), &g_intra);
        total_objective(row.parts, loss_cfg);
        EncoderParams next = out.params;
        intra_opt.step(next, g_intra, kappa);

        if (!anchors.empty()) {
          EncoderParams g_inter = next.zeros_like();
          row.parts.l_er = inter_objective(enc, next, anchors, batch, loss_cfg,
                                           derive_seed(cfg.seed, stream + 2), &g_inter);
          total_objective(row.parts, loss_cfg);
          inter_opt.step(next, g_inter, kappa);
        }
        row.communities = {communities[0].partition.count, communities[1].partition.count};
        row.total = total_objective(row.parts, loss_cfg);
        bool finite = true;
        next.for_each([&](const std::string&, const Matrix& m, TensorKind, int) {
          finite = finite && m.allFinite();
        });
        if (!finite) throw DivergenceError("parameters became non-finite");
        out.params = std::move(next);
        out.history.push_back(row);
      }
    }
  } catch (const DivergenceError& e) {
    out.divergence = e.what();
  } catch (const NumericError& e) {
    out.divergence = e.what();
  }
  out.embeddings = enc.forward(out.params, Mode::eval);
  return out;
}

}  // namespace curvlink
