#pragma once

// Link-prediction and alignment metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/parallel.hpp"

namespace curvlink {

struct DecoderConfig {
  double r = 2.0;
  double t = 1.0;
  double threshold = 0.5;

  void validate() const {
    if (!(t > 0.0)) throw DomainError("decoder temperature must be positive");
  }
};

// 1 / (exp((d^2 - r) / t) + 1) given the squared distance.
inline double fermi_dirac(double sq_distance, const DecoderConfig& cfg = {}) {
  const double a = (sq_distance - cfg.r) / cfg.t;
  if (a > 0.0) {
    const double e = std::exp(-a);
    return e / (1.0 + e);
  }
  return 1.0 / (std::exp(a) + 1.0);
}

inline double fermi_dirac_score(const ManifoldPoint& x, const ManifoldPoint& y,
                                const DecoderConfig& cfg = {}) {
  const double d = distance(x, y);
  return fermi_dirac(d * d, cfg);
}

// Rank-sum estimate of P(positive > negative), ties counting one half.
inline double auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw InputError("auc needs at least one positive and one negative score");
  }
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.emplace_back(s, true);
  for (double s : negatives) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    while (j < all.size() && all[j].first == all[i].first) pos += all[j++].second;
    // Ranks i+1 .. j share their average.
    rank_sum += static_cast<double>(pos) * (static_cast<double>(i + 1 + j) / 2.0);
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// F1 at `threshold` (score >= threshold predicts positive). Zero when nothing
// is predicted positive.
inline double f1(std::span<const double> scores, const std::vector<bool>& labels,
                 double threshold = 0.5) {
  if (scores.size() != labels.size()) throw InputError("f1: scores and labels differ in length");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    tp += predicted && labels[i];
    fp += predicted && !labels[i];
    fn += !predicted && labels[i];
  }
  if (tp + fn == 0) throw InputError("f1 needs at least one positive label");
  if (tp + fp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct IntraMetrics {
  double auc = 0.0;
  double f1 = 0.0;
};

// Scores held-out edges against sampled non-edges with the Fermi-Dirac decoder.
inline IntraMetrics evaluate_intra(const Matrix& embeddings, Curvature k,
                                   std::span<const Edge> positives, std::span<const Edge> negatives,
                                   const DecoderConfig& cfg = {}) {
  cfg.validate();
  auto score = [&](const Edge& e) {
    if (e.u >= embeddings.rows() || e.v >= embeddings.rows()) {
      throw InputError("evaluation edge refers to a node outside the embedding");
    }
    const double d = kstereo::distance(embeddings.row(e.u).transpose(),
                                       embeddings.row(e.v).transpose(), k);
    return fermi_dirac(d * d, cfg);
  };
  std::vector<double> pos, neg;
  for (const Edge& e : positives) pos.push_back(score(e));
  for (const Edge& e : negatives) neg.push_back(score(e));
  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  std::vector<bool> labels(all.size(), false);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(pos.size()), true);
  return {auc(pos, neg), f1(all, labels, cfg.threshold)};
}

struct RankedCandidate {
  NodeId node = 0;
  double distance = 0.0;
};

struct RankEntry {
  NodeId source = 0;
  NodeId truth = 0;
  std::size_t truth_rank = 0;  // 1-based
  std::vector<RankedCandidate> candidates;  // filled only when requested
};

struct RankResult {
  std::vector<RankEntry> entries;

  std::vector<std::size_t> ranks() const {
    std::vector<std::size_t> r;
    r.reserve(entries.size());
    for (const auto& e : entries) r.push_back(e.truth_rank);
    return r;
  }
};

// Ranks every target node for each anchor's source by flat distance between
// tangent coordinates; ties go to the smaller node id.
inline RankResult rank_candidates(const Matrix& source_tangent, const Matrix& target_tangent,
                                  std::span<const AnchorPair> anchors, bool keep_lists = false,
                                  std::size_t threads = 1) {
  if (source_tangent.cols() != target_tangent.cols()) {
    throw InputError("rank_candidates: embedding dimensions differ");
  }
  RankResult out;
  out.entries.resize(anchors.size());
  parallel_for(anchors.size(), threads, [&](std::size_t a) {
    const AnchorPair& pair = anchors[a];
    if (pair.source >= source_tangent.rows() || pair.target >= target_tangent.rows()) {
      throw InputError("rank_candidates: anchor outside the embeddings");
    }
    const Vector x = source_tangent.row(pair.source).transpose();
    std::vector<RankedCandidate> cand(static_cast<std::size_t>(target_tangent.rows()));
    for (Index j = 0; j < target_tangent.rows(); ++j) {
      cand[static_cast<std::size_t>(j)] = {static_cast<NodeId>(j),
                                           (target_tangent.row(j).transpose() - x).norm()};
    }
    const RankedCandidate truth = cand[pair.target];
    std::size_t rank = 1;
    for (const auto& c : cand) {
      rank += c.distance < truth.distance || (c.distance == truth.distance && c.node < truth.node);
    }
    RankEntry& e = out.entries[a];
    e.source = pair.source;
    e.truth = pair.target;
    e.truth_rank = rank;
    if (keep_lists) {
      std::sort(cand.begin(), cand.end(), [](const RankedCandidate& p, const RankedCandidate& q) {
        return p.distance < q.distance || (p.distance == q.distance && p.node < q.node);
      });
      e.candidates = std::move(cand);
    }
  });
  return out;
}

inline double hit_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (k < 1) throw DomainError("hit@k needs k >= 1");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r >= 1 && r <= k;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

// Mean reciprocal rank with ranks beyond k contributing zero.
inline double mrr(std::span<const std::size_t> ranks, std::size_t k) {
  if (k < 1) throw DomainError("mrr needs k >= 1");
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r >= 1 && r <= k) total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

inline double hit_at_k(const RankResult& r, std::size_t k) { return hit_at_k(r.ranks(), k); }
inline double mrr(const RankResult& r, std::size_t k) { return mrr(r.ranks(), k); }

// Mean of |d_G / d_k - 1| over the listed (d_G, d_k) pairs.
inline double distortion(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw InputError("distortion needs at least one pair");
  double total = 0.0;
  for (auto [dg, dk] : pairs) {
    if (!(dk > 0.0)) throw NumericError("distortion: zero embedded distance for distinct nodes");
    total += std::abs(dg / dk - 1.0);
  }
  return total / static_cast<double>(pairs.size());
}

// (1/N^2) sum over ordered distinct pairs of |d_G / d_k - 1|; the diagonal is
// excluded.
inline double distortion(const Matrix& graph_distance, const Matrix& embedded_distance) {
  const Index n = graph_distance.rows();
  if (n < 2) throw InputError("distortion needs at least two nodes");
  if (graph_distance.cols() != n || embedded_distance.rows() != n || embedded_distance.cols() != n) {
    throw InputError("distortion: distance matrices must be square and equal in size");
  }
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dk = embedded_distance(i, j);
      if (!(dk > 0.0)) throw NumericError("distortion: zero embedded distance for distinct nodes");
      total += std::abs(graph_distance(i, j) / dk - 1.0);
    }
  return total / static_cast<double>(n * n);
}

}  // namespace curvlink
