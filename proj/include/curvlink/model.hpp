#pragma once

// Curvature-aware graph attention encoder over a two-layer multiplex.
//
// Per network n (curvature k_n) and stacked layer l, with input points H:
//   T = log_0(H),  Z = T W_self^T,  Zx_i = log_0(H'_p) W_cross^T  for the
//   anchor partner p of i in the other network (its own curvature),
//   e_ij = sigmoid(beta_in . [Z_i || Z_j])   for j in {i} + N(i),
//   e_ip = sigmoid(beta_er . [Z_i || Zx_i]),
//   E = softmax(e) over the joint candidate set, then dropout + renormalize,
//   H_i <- gyromidpoint({exp_0(Z_j)} + {exp_0(Zx_i)}, E)  at k_n.
// The backward pass is written out by hand; the domain clamp inside exp_0 is
// treated as the identity.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/rng.hpp"

namespace curvlink {

inline constexpr std::array<const char*, 2> kNetworkNames{"source", "target"};

struct EncoderConfig {
  Index input_dim = 32;  // base embedding dim when a layer has no features
  Index hidden_dim = 32;
  Index output_dim = 32;
  std::size_t layers = 2;
  double dropout = 0.3;

  void validate() const {
    if (layers < 1) throw DomainError("encoder needs at least one layer");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
      throw DomainError("encoder dimensions must be positive");
    }
  }

  Index out_dim(std::size_t layer) const {
    return layer + 1 == layers ? output_dim : hidden_dim;
  }
};

struct LayerParams {
  Matrix w_self;   // d_out x d_in
  Matrix w_cross;  // d_out x d_in of the other network
  Matrix beta_in;  // 2 d_out x 1
  Matrix beta_er;  // 2 d_out x 1
};

struct NetworkParams {
  Matrix base;  // rows are points at the network's curvature
  bool base_learnable = true;
  std::vector<LayerParams> layers;
};

enum class TensorKind { euclidean, manifold, fixed };

struct EncoderParams {
  std::array<NetworkParams, 2> net;

  // Visits every tensor as f(name, matrix, kind, network).
  template <typename F>
  void for_each(F&& f) {
    for (int n = 0; n < 2; ++n) {
      const std::string p = kNetworkNames[n];
      auto& np = net[n];
      f(p + ".base", np.base, np.base_learnable ? TensorKind::manifold : TensorKind::fixed, n);
      for (std::size_t l = 0; l < np.layers.size(); ++l) {
        const std::string q = p + ".layer" + std::to_string(l) + ".";
        f(q + "w_self", np.layers[l].w_self, TensorKind::euclidean, n);
        f(q + "w_cross", np.layers[l].w_cross, TensorKind::euclidean, n);
        f(q + "beta_in", np.layers[l].beta_in, TensorKind::euclidean, n);
        f(q + "beta_er", np.layers[l].beta_er, TensorKind::euclidean, n);
      }
    }
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<EncoderParams*>(this)->for_each(
        [&](const std::string& name, Matrix& m, TensorKind kind, int n) {
          f(name, static_cast<const Matrix&>(m), kind, n);
        });
  }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](const std::string&, Matrix& m, TensorKind, int) { m.setZero(); });
    return z;
  }
};

// ---------------------------------------------------------------------------
// Single-node operations on typed points.

inline double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

inline double intra_attention_score(const ManifoldPoint& xi, const ManifoldPoint& xj,
                                    const Matrix& w, const Vector& beta) {
  if (!(xi.curvature() == xj.curvature())) throw DomainError("intra score: curvature mismatch");
  const Index d = w.rows();
  if (beta.size() != 2 * d) throw DomainError("intra score: beta must have length 2 d_out");
  const Vector zi = w * kstereo::log0(xi.coords(), xi.curvature());
  const Vector zj = w * kstereo::log0(xj.coords(), xj.curvature());
  return sigmoid(beta.head(d).dot(zi) + beta.tail(d).dot(zj));
}

inline double inter_attention_score(const ManifoldPoint& xi, const ManifoldPoint& yj,
                                    const Matrix& wx, const Matrix& wxy, const Vector& beta) {
  const Index d = wx.rows();
  if (wxy.rows() != d || beta.size() != 2 * d) {
    throw DomainError("inter score: inconsistent shapes");
  }
  const Vector zi = wx * kstereo::log0(xi.coords(), xi.curvature());
  const Vector zj = wxy * kstereo::log0(yj.coords(), yj.curvature());
  return sigmoid(beta.head(d).dot(zi) + beta.tail(d).dot(zj));
}

// Softmax over the joint candidate list (self, neighbors, anchors).
inline std::vector<double> normalize_attention(std::span<const double> scores) {
  if (scores.empty()) throw DomainError("normalize_attention: empty candidate set");
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += (out[i] = std::exp(scores[i] - mx));
  for (double& v : out) v /= total;
  return out;
}

inline ManifoldPoint aggregate(std::span<const ManifoldPoint> points,
                               std::span<const double> weights) {
  return gyromidpoint(points, weights);
}

// ---------------------------------------------------------------------------
// Batched encoder.

enum class Mode { train, eval };

struct LayerCache {
  Matrix input;    // H
  Matrix tangent;  // log_0(H)
  Matrix z;        // T W_self^T
  Matrix zx;       // cross rows; zero for nodes without a partner
  std::vector<std::size_t> offset;  // candidate list of node i: [offset[i], offset[i+1])
  std::vector<double> raw;          // sigmoid scores
  std::vector<double> soft;         // softmax
  std::vector<double> kept;         // after dropout and renormalization
  std::vector<double> mask;
  Matrix output;
};

struct ForwardCache {
  std::array<std::vector<LayerCache>, 2> layers;
};

namespace detail {

inline Matrix rowwise_exp0(const Matrix& z, Curvature k) {
  Matrix out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) out.row(i) = kstereo::exp0(z.row(i).transpose(), k).transpose();
  return out;
}

inline Matrix rowwise_log0(const Matrix& h, Curvature k) {
  Matrix out(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i) out.row(i) = kstereo::log0(h.row(i).transpose(), k).transpose();
  return out;
}

inline Matrix glorot(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

}  // namespace detail

class Encoder {
 public:
  Encoder(Layer source, Layer target, std::vector<AnchorPair> anchors, Curvature k_source,
          Curvature k_target, EncoderConfig cfg)
      : graph_{std::move(source), std::move(target)},
        anchors_(std::move(anchors)),
        kappa_{k_source, k_target},
        cfg_(cfg) {
    cfg_.validate();
    validate_anchors(graph_[0], graph_[1], anchors_);
    for (int n = 0; n < 2; ++n) partner_[n].assign(graph_[n].node_count(), -1);
    for (const AnchorPair& a : anchors_) {
      partner_[0][a.source] = static_cast<std::int64_t>(a.target);
      partner_[1][a.target] = static_cast<std::int64_t>(a.source);
    }
  }

  const Layer& graph(int n) const { return graph_[n]; }
  Curvature kappa(int n) const { return kappa_[n]; }
  const EncoderConfig& config() const { return cfg_; }
  const std::vector<AnchorPair>& anchors() const { return anchors_; }
  std::int64_t partner(int n, NodeId i) const { return partner_[n][i]; }

  // Seeded initialization. Layers with features get a fixed lifted base;
  // others get learnable base points lifted from random unit vectors.
  EncoderParams init_params(std::uint64_t seed) const {
    EncoderParams p;
    std::array<Index, 2> in_dim{};
    for (int n = 0; n < 2; ++n) {
      const auto& feats = graph_[n].features();
      Matrix flat = feats ? *feats
                          : random_unit_features(graph_[n].node_count(), cfg_.input_dim,
                                                 derive_seed(seed, 0xba5e0 + n));
      p.net[n].base = detail::rowwise_exp0(flat, kappa_[n]);
      p.net[n].base_learnable = !feats.has_value();
      in_dim[n] = flat.cols();
    }
    for (int n = 0; n < 2; ++n) {
      Rng rng = make_rng(seed, 0x3e1 + static_cast<std::uint64_t>(n));
      Index d_self = in_dim[n];
      Index d_other = in_dim[1 - n];
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const Index out = cfg_.out_dim(l);
        LayerParams lp;
        lp.w_self = detail::glorot(out, d_self, rng);
        lp.w_cross = detail::glorot(out, d_other, rng);
        lp.beta_in = Matrix::Zero(2 * out, 1);
        lp.beta_er = Matrix::Zero(2 * out, 1);
        p.net[n].layers.push_back(std::move(lp));
        d_self = d_other = out;
      }
    }
    check_shapes(p);
    return p;
  }

  void check_shapes(const EncoderParams& p) const {
    std::array<Index, 2> d{};
    for (int n = 0; n < 2; ++n) {
      const auto& np = p.net[n];
      if (static_cast<std::size_t>(np.base.rows()) != graph_[n].node_count()) {
        throw DomainError(std::string(kNetworkNames[n]) + " base rows do not match node count");
      }
      if (np.layers.size() != cfg_.layers) throw DomainError("parameter layer count mismatch");
      d[n] = np.base.cols();
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const Index out = cfg_.out_dim(l);
      for (int n = 0; n < 2; ++n) {
        const auto& lp = p.net[n].layers[l];
        if (lp.w_self.rows() != out || lp.w_self.cols() != d[n] || lp.w_cross.rows() != out ||
            lp.w_cross.cols() != d[1 - n] || lp.beta_in.rows() != 2 * out ||
            lp.beta_er.rows() != 2 * out || lp.beta_in.cols() != 1 || lp.beta_er.cols() != 1) {
          throw DomainError(std::string(kNetworkNames[n]) + " layer " + std::to_string(l) +
                            " parameter shapes are inconsistent");
        }
      }
      d = {out, out};
    }
  }

  // Returns the final embeddings of both networks. In train mode, dropout
  // masks are drawn from `rng` (required); eval mode is deterministic.
  std::array<Matrix, 2> forward(const EncoderParams& p, Mode mode, Rng* rng = nullptr,
                                ForwardCache* cache = nullptr) const {
    check_shapes(p);
    if (mode == Mode::train && cfg_.dropout > 0.0 && !rng) {
      throw DomainError("train-mode forward needs a dropout generator");
    }
    std::array<Matrix, 2> h{p.net[0].base, p.net[1].base};
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    for (int n = 0; n < 2; ++n) c.layers[n].assign(cfg_.layers, LayerCache{});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      for (int n = 0; n < 2; ++n) {
        LayerCache& lc = c.layers[n][l];
        lc.input = h[n];
        lc.tangent = detail::rowwise_log0(h[n], kappa_[n]);
        lc.z = lc.tangent * p.net[n].layers[l].w_self.transpose();
      }
      for (int n = 0; n < 2; ++n) {
        LayerCache& lc = c.layers[n][l];
        const Matrix& other = c.layers[1 - n][l].tangent;
        const Matrix& wc = p.net[n].layers[l].w_cross;
        lc.zx = Matrix::Zero(lc.z.rows(), lc.z.cols());
        for (Index i = 0; i < lc.z.rows(); ++i) {
          const auto q = partner_[n][static_cast<std::size_t>(i)];
          if (q >= 0) lc.zx.row(i) = other.row(static_cast<Index>(q)) * wc.transpose();
        }
      }
      for (int n = 0; n < 2; ++n) {
        attend(n, p.net[n].layers[l], mode, rng, c.layers[n][l]);
        h[n] = c.layers[n][l].output;
      }
    }
    return h;
  }

  // Accumulates parameter gradients given gradients of the final embedding
  // coordinates. `cache` must come from the forward pass at `p`.
  void backward(const EncoderParams& p, const ForwardCache& cache,
                const std::array<Matrix, 2>& d_out, EncoderParams& grad) const {
    std::array<Matrix, 2> d_h = d_out;
    for (std::size_t l = cfg_.layers; l-- > 0;) {
      std::array<Matrix, 2> d_z, d_zx, d_t;
      for (int n = 0; n < 2; ++n) {
        const LayerCache& lc = cache.layers[n][l];
        d_z[n] = Matrix::Zero(lc.z.rows(), lc.z.cols());
        d_zx[n] = Matrix::Zero(lc.z.rows(), lc.z.cols());
        d_t[n] = Matrix::Zero(lc.tangent.rows(), lc.tangent.cols());
        attend_backward(n, p.net[n].layers[l], lc, d_h[n], d_z[n], d_zx[n],
                        grad.net[n].layers[l]);
      }
      for (int n = 0; n < 2; ++n) {
        const LayerCache& lc = cache.layers[n][l];
        const LayerCache& oc = cache.layers[1 - n][l];
        const LayerParams& lp = p.net[n].layers[l];
        LayerParams& gp = grad.net[n].layers[l];
        gp.w_self += d_z[n].transpose() * lc.tangent;
        d_t[n] += d_z[n] * lp.w_self;
        for (Index i = 0; i < lc.z.rows(); ++i) {
          const auto q = partner_[n][static_cast<std::size_t>(i)];
          if (q < 0) continue;
          gp.w_cross += d_zx[n].row(i).transpose() * oc.tangent.row(static_cast<Index>(q));
          d_t[1 - n].row(static_cast<Index>(q)) += d_zx[n].row(i) * lp.w_cross;
        }
      }
      for (int n = 0; n < 2; ++n) {
        const LayerCache& lc = cache.layers[n][l];
        d_h[n] = Matrix(lc.input.rows(), lc.input.cols());
        for (Index i = 0; i < lc.input.rows(); ++i) {
          const Vector x = lc.input.row(i).transpose();
          d_h[n].row(i) = kstereo::radial_backward(x, kstereo::log0_factor(x.norm(), kappa_[n]),
                                                   d_t[n].row(i).transpose())
                              .transpose();
        }
      }
    }
    for (int n = 0; n < 2; ++n) {
      if (p.net[n].base_learnable) grad.net[n].base += d_h[n];
    }
  }

 private:
  void attend(int n, const LayerParams& lp, Mode mode, Rng* rng, LayerCache& lc) const {
    const Layer& g = graph_[n];
    const Curvature k = kappa_[n];
    const Index d = lc.z.cols();
    const Index count = lc.z.rows();
    const Vector a_self = lc.z * lp.beta_in.topRows(d);
    const Vector a_nbr = lc.z * lp.beta_in.bottomRows(d);
    const Vector e_self = lc.z * lp.beta_er.topRows(d);
    const Vector e_cross = lc.zx * lp.beta_er.bottomRows(d);
    const Matrix pts = detail::rowwise_exp0(lc.z, k);

    lc.offset.assign(static_cast<std::size_t>(count) + 1, 0);
    for (Index i = 0; i < count; ++i) {
      const auto u = static_cast<NodeId>(i);
      lc.offset[u + 1] = lc.offset[u] + 1 + g.degree(u) + (partner_[n][u] >= 0 ? 1 : 0);
    }
    const std::size_t total = lc.offset.back();
    lc.raw.assign(total, 0.0);
    lc.soft.assign(total, 0.0);
    lc.kept.assign(total, 0.0);
    lc.mask.assign(total, 1.0);
    lc.output.resize(count, d);

    for (Index i = 0; i < count; ++i) {
      const auto u = static_cast<NodeId>(i);
      const std::size_t base = lc.offset[u];
      const std::size_t m = lc.offset[u + 1] - base;
      const auto nbrs = g.neighbors(u);
      Matrix cand(static_cast<Index>(m), d);
      std::size_t r = 0;
      lc.raw[base + r] = sigmoid(a_self[i] + a_nbr[i]);
      cand.row(static_cast<Index>(r++)) = pts.row(i);
      for (NodeId w : nbrs) {
        lc.raw[base + r] = sigmoid(a_self[i] + a_nbr[w]);
        cand.row(static_cast<Index>(r++)) = pts.row(w);
      }
      if (partner_[n][u] >= 0) {
        lc.raw[base + r] = sigmoid(e_self[i] + e_cross[i]);
        cand.row(static_cast<Index>(r++)) =
            kstereo::exp0(lc.zx.row(i).transpose(), k).transpose();
      }

      const auto soft = normalize_attention(std::span<const double>(lc.raw.data() + base, m));
      std::copy(soft.begin(), soft.end(), lc.soft.begin() + static_cast<std::ptrdiff_t>(base));
      if (mode == Mode::train && cfg_.dropout > 0.0) {
        bool any = false;
        for (std::size_t q = 0; q < m; ++q) {
          lc.mask[base + q] = uniform01(*rng) < cfg_.dropout ? 0.0 : 1.0;
          any = any || lc.mask[base + q] > 0.0;
        }
        if (!any) lc.mask[base] = 1.0;
      }
      double s = 0.0;
      for (std::size_t q = 0; q < m; ++q) s += lc.mask[base + q] * lc.soft[base + q];
      Vector wts(static_cast<Index>(m));
      for (std::size_t q = 0; q < m; ++q) {
        lc.kept[base + q] = lc.mask[base + q] * lc.soft[base + q] / s;
        wts[static_cast<Index>(q)] = lc.kept[base + q];
      }
      lc.output.row(i) = kstereo::gyromidpoint(cand, wts, k).transpose();
    }
  }

  void attend_backward(int n, const LayerParams& lp, const LayerCache& lc, const Matrix& d_out,
                       Matrix& d_z, Matrix& d_zx, LayerParams& gp) const {
    const Layer& g = graph_[n];
    const Curvature k = kappa_[n];
    const Index d = lc.z.cols();
    const Matrix pts = detail::rowwise_exp0(lc.z, k);
    const auto bi_top = lp.beta_in.topRows(d);
    const auto bi_bot = lp.beta_in.bottomRows(d);
    const auto be_top = lp.beta_er.topRows(d);
    const auto be_bot = lp.beta_er.bottomRows(d);

    for (Index i = 0; i < lc.z.rows(); ++i) {
      const auto u = static_cast<NodeId>(i);
      const std::size_t base = lc.offset[u];
      const std::size_t m = lc.offset[u + 1] - base;
      const auto nbrs = g.neighbors(u);
      const bool anchored = partner_[n][u] >= 0;

      std::vector<Index> src;
      src.reserve(m);
      src.push_back(i);
      for (NodeId w : nbrs) src.push_back(static_cast<Index>(w));
      Matrix cand(static_cast<Index>(m), d);
      for (std::size_t r = 0; r < nbrs.size() + 1; ++r) cand.row(static_cast<Index>(r)) = pts.row(src[r]);
      if (anchored) {
        cand.row(static_cast<Index>(m - 1)) = kstereo::exp0(lc.zx.row(i).transpose(), k).transpose();
      }
      Vector wts(static_cast<Index>(m));
      for (std::size_t q = 0; q < m; ++q) wts[static_cast<Index>(q)] = lc.kept[base + q];

      Matrix d_cand = Matrix::Zero(static_cast<Index>(m), d);
      Vector d_w = Vector::Zero(static_cast<Index>(m));
      kstereo::gyromidpoint_backward(cand, wts, k, d_out.row(i).transpose(), d_cand, d_w);

      // Candidate points back to their pre-images.
      for (std::size_t r = 0; r < nbrs.size() + 1; ++r) {
        const Vector zj = lc.z.row(src[r]).transpose();
        d_z.row(src[r]) += kstereo::radial_backward(zj, kstereo::exp0_factor(zj.norm(), k),
                                                    d_cand.row(static_cast<Index>(r)).transpose())
                               .transpose();
      }
      if (anchored) {
        const Vector zx = lc.zx.row(i).transpose();
        d_zx.row(i) += kstereo::radial_backward(zx, kstereo::exp0_factor(zx.norm(), k),
                                                d_cand.row(static_cast<Index>(m - 1)).transpose())
                           .transpose();
      }

      // Renormalization after dropout, softmax, sigmoid.
      double s = 0.0, dot_kept = 0.0;
      for (std::size_t q = 0; q < m; ++q) {
        s += lc.mask[base + q] * lc.soft[base + q];
        dot_kept += d_w[static_cast<Index>(q)] * lc.kept[base + q];
      }
      std::vector<double> d_soft(m);
      double dot_soft = 0.0;
      for (std::size_t q = 0; q < m; ++q) {
        d_soft[q] = lc.mask[base + q] / s * (d_w[static_cast<Index>(q)] - dot_kept);
        dot_soft += d_soft[q] * lc.soft[base + q];
      }
      for (std::size_t q = 0; q < m; ++q) {
        const double e = lc.raw[base + q];
        const double ds = lc.soft[base + q] * (d_soft[q] - dot_soft) * e * (1.0 - e);
        if (anchored && q == m - 1) {
          gp.beta_er.topRows(d) += ds * lc.z.row(i).transpose();
          gp.beta_er.bottomRows(d) += ds * lc.zx.row(i).transpose();
          d_z.row(i) += ds * be_top.transpose();
          d_zx.row(i) += ds * be_bot.transpose();
        } else {
          const Index j = src[q];
          gp.beta_in.topRows(d) += ds * lc.z.row(i).transpose();
          gp.beta_in.bottomRows(d) += ds * lc.z.row(j).transpose();
          d_z.row(i) += ds * bi_top.transpose();
          d_z.row(j) += ds * bi_bot.transpose();
        }
      }
    }
  }

  std::array<Layer, 2> graph_;
  std::vector<AnchorPair> anchors_;
  std::array<Curvature, 2> kappa_;
  EncoderConfig cfg_;
  std::array<std::vector<std::int64_t>, 2> partner_;
};

}  // namespace curvlink
