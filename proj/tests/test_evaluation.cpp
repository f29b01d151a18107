#include <gtest/gtest.h>

#include <random>

#include "curvlink/evaluation.hpp"
#include "test_support.hpp"

using namespace curvlink;
using namespace curvlink::testing;

namespace {

double naive_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

double naive_hit(const std::vector<std::size_t>& ranks, std::size_t k) {
  double h = 0.0;
  for (std::size_t r : ranks) h += r <= k ? 1.0 : 0.0;
  return h / static_cast<double>(ranks.size());
}

double naive_mrr(const std::vector<std::size_t>& ranks, std::size_t k) {
  double s = 0.0;
  for (std::size_t r : ranks) s += r <= k ? 1.0 / static_cast<double>(r) : 0.0;
  return s / static_cast<double>(ranks.size());
}

// Rank by materializing and sorting the full candidate list.
std::size_t naive_rank(const Matrix& s, const Matrix& t, NodeId src, NodeId truth) {
  std::vector<std::pair<double, NodeId>> d;
  for (Index j = 0; j < t.rows(); ++j) {
    double sq = 0.0;
    for (Index c = 0; c < t.cols(); ++c) sq += (t(j, c) - s(src, c)) * (t(j, c) - s(src, c));
    d.emplace_back(std::sqrt(sq), static_cast<NodeId>(j));
  }
  std::sort(d.begin(), d.end());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i].second == truth) return i + 1;
  return 0;
}

}  // namespace

TEST(FermiDirac, Examples) {
  EXPECT_DOUBLE_EQ(fermi_dirac(2.0), 0.5);
  EXPECT_NEAR(fermi_dirac(0.0), 1.0 / (std::exp(-2.0) + 1.0), 1e-15);
  EXPECT_NEAR(fermi_dirac(0.0), 0.8808, 1e-4);
  EXPECT_LT(fermi_dirac(1e6), 1e-300);
  EXPECT_EQ(fermi_dirac(std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_THROW((DecoderConfig{.t = 0.0}.validate()), DomainError);
}

TEST(FermiDirac, StrictlyDecreasingInDistance) {
  std::mt19937_64 rng(1);
  const Curvature k(-1.0);
  const Vector origin = Vector::Zero(3);
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < 500; ++i) {
    const ManifoldPoint x(origin, k), y(random_point(3, k, rng, 0.95), k);
    samples.emplace_back(distance(x, y), fermi_dirac_score(x, y));
  }
  std::sort(samples.begin(), samples.end());
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].first > samples[i - 1].first) EXPECT_LT(samples[i].second, samples[i - 1].second);
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.5}, std::vector<double>{0.5, 0.3}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.85, 0.1}), 0.75);
  EXPECT_THROW(auc(std::vector<double>{}, std::vector<double>{0.1}), InputError);
}

TEST(Auc, MatchesPairwiseComparison) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 100);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> pos(static_cast<std::size_t>(size(rng)));
    std::vector<double> neg(static_cast<std::size_t>(size(rng)));
    const bool ties = trial % 2 == 0;
    for (double& x : pos) x = ties ? coarse(rng) / 10.0 : nd(rng) + 0.5;
    for (double& x : neg) x = ties ? coarse(rng) / 12.0 : nd(rng);
    EXPECT_NEAR(auc(pos, neg), naive_auc(pos, neg), 1e-12);
  }
}

TEST(F1, Examples) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  EXPECT_EQ(f1(s, {true, true, false, false}), 1.0);
  EXPECT_EQ(f1(std::vector<double>{0.1, 0.2}, {true, false}), 0.0);
  // TP = 2, FP = 1, FN = 1.
  EXPECT_NEAR(f1(std::vector<double>{0.9, 0.8, 0.7, 0.1}, {true, true, false, true}), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(f1(s, {false, false, false, false}), InputError);
  EXPECT_THROW(f1(s, {true}), InputError);
}

TEST(F1, ThresholdIsInclusive) {
  EXPECT_EQ(f1(std::vector<double>{0.5}, {true}), 1.0);
  EXPECT_EQ(f1(std::vector<double>{0.5}, {true}, 0.6), 0.0);
}

TEST(EvaluateIntra, SeparatesNearAndFarPairs) {
  const Curvature k(-1.0);
  Matrix emb(4, 2);
  emb << 0.0, 0.0, 0.05, 0.0, 0.0, 0.9, -0.9, 0.0;
  const std::vector<Edge> pos{{0, 1}};
  const std::vector<Edge> neg{{2, 3}};
  const IntraMetrics m = evaluate_intra(emb, k, pos, neg);
  EXPECT_EQ(m.auc, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  const std::vector<Edge> bad{{0, 9}};
  EXPECT_THROW(evaluate_intra(emb, k, bad, neg), InputError);
}

TEST(RankCandidates, IdenticalTargetRanksFirst) {
  std::mt19937_64 rng(3);
  Matrix s(3, 2), t(5, 2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Index i = 0; i < s.size(); ++i) s.data()[i] = nd(rng);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = nd(rng);
  t.row(3) = s.row(1);
  const std::vector<AnchorPair> anchors{{1, 3}};
  const RankResult r = rank_candidates(s, t, anchors, true);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].truth_rank, 1u);
  EXPECT_EQ(r.entries[0].candidates.size(), 5u);
  EXPECT_EQ(r.entries[0].candidates[0].node, 3u);
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_LE(r.entries[0].candidates[i - 1].distance, r.entries[0].candidates[i].distance);
  }
}

TEST(RankCandidates, TiesGoToSmallerId) {
  Matrix s = Matrix::Zero(1, 2);
  Matrix t(4, 2);
  t << 1, 0, 0, 1, -1, 0, 0, 2;
  const std::vector<AnchorPair> a1{{0, 2}}, a2{{0, 0}};
  EXPECT_EQ(rank_candidates(s, t, a1).entries[0].truth_rank, 3u);
  EXPECT_EQ(rank_candidates(s, t, a2).entries[0].truth_rank, 1u);
  const auto full = rank_candidates(s, t, a1, true).entries[0].candidates;
  EXPECT_EQ(full[0].node, 0u);
  EXPECT_EQ(full[1].node, 1u);
  EXPECT_EQ(full[2].node, 2u);
  EXPECT_EQ(full[3].node, 3u);
}

TEST(RankCandidates, InvariantUnderCommonRotation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix s(20, 4), t(30, 4), q(4, 4);
  for (Index i = 0; i < s.size(); ++i) s.data()[i] = nd(rng);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = nd(rng);
  for (Index i = 0; i < q.size(); ++i) q.data()[i] = nd(rng);
  const Matrix rot = Eigen::HouseholderQR<Matrix>(q).householderQ();
  std::vector<AnchorPair> anchors;
  for (NodeId i = 0; i < 20; ++i) anchors.push_back({i, (i * 7) % 30});
  const auto a = rank_candidates(s, t, anchors).ranks();
  const auto b = rank_candidates(s * rot, t * rot, anchors).ranks();
  EXPECT_EQ(a, b);
}

TEST(RankCandidates, MatchesSortedListAndIsThreadInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix s(40, 3), t(60, 3);
  for (Index i = 0; i < s.size(); ++i) s.data()[i] = nd(rng);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = nd(rng);
  std::vector<AnchorPair> anchors;
  for (NodeId i = 0; i < 40; ++i) anchors.push_back({i, (i * 11 + 3) % 60});
  const auto one = rank_candidates(s, t, anchors, false, 1);
  const auto four = rank_candidates(s, t, anchors, false, 4);
  EXPECT_EQ(one.ranks(), four.ranks());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    EXPECT_EQ(one.entries[a].truth_rank, naive_rank(s, t, anchors[a].source, anchors[a].target));
  }
}

TEST(HitAndMrr, Examples) {
  EXPECT_EQ(hit_at_k(std::vector<std::size_t>{1, 1, 1}, 1), 1.0);
  EXPECT_EQ(hit_at_k(std::vector<std::size_t>{1, 12}, 10), 0.5);
  EXPECT_EQ(mrr(std::vector<std::size_t>{1, 1}, 10), 1.0);
  EXPECT_EQ(mrr(std::vector<std::size_t>{1, 2}, 2), 0.75);
  EXPECT_EQ(mrr(std::vector<std::size_t>{11}, 10), 0.0);
  EXPECT_THROW(hit_at_k(std::vector<std::size_t>{1}, 0), DomainError);
  EXPECT_THROW(mrr(std::vector<std::size_t>{1}, 0), DomainError);
}

TEST(HitAndMrr, MatchNaiveOnRandomTables) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> rank(1, 200), len(1, 80);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> r(len(rng));
    for (auto& x : r) x = rank(rng);
    double prev = 0.0;
    for (std::size_t k : {1, 5, 10, 30, 200}) {
      const double h = hit_at_k(r, k);
      EXPECT_NEAR(h, naive_hit(r, k), 1e-12);
      EXPECT_NEAR(mrr(r, k), naive_mrr(r, k), 1e-12);
      EXPECT_GE(h, prev);
      prev = h;
    }
  }
}

TEST(Distortion, PairExamples) {
  const std::vector<std::pair<double, double>> exact{{1, 1}, {2, 2}, {3, 3}};
  EXPECT_EQ(distortion(exact), 0.0);
  const std::vector<std::pair<double, double>> doubled{{1, 2}, {2, 4}, {3, 6}};
  EXPECT_EQ(distortion(doubled), 0.5);
  // Ratios d_G / d_k of 1, 2 and 0.5.
  const std::vector<std::pair<double, double>> mixed{{1, 1}, {2, 1}, {1, 2}};
  EXPECT_EQ(distortion(mixed), 0.5);
  const std::vector<std::pair<double, double>> zero{{1, 0}};
  EXPECT_THROW(distortion(zero), NumericError);
}

TEST(Distortion, MatrixFormNormalizesByNSquared) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  const Index n = 7;
  Matrix dg = Matrix::Zero(n, n), dk = Matrix::Zero(n, n);
  double naive = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      dg(i, j) = u(rng);
      dk(i, j) = u(rng);
      naive += std::abs(dg(i, j) / dk(i, j) - 1.0);
    }
  EXPECT_NEAR(distortion(dg, dk), naive / static_cast<double>(n * n), 1e-12);
  EXPECT_EQ(distortion(dg, dg), 0.0);
  EXPECT_NEAR(distortion(dg, 2.0 * dg), 0.5 * static_cast<double>(n - 1) / static_cast<double>(n), 1e-12);
  dk(1, 2) = 0.0;
  EXPECT_THROW(distortion(dg, dk), NumericError);
}
