#pragma once

// End-to-end glue: split a multiplex, estimate curvature on the training
// graphs, train the encoder and score the held-out links.

#include <array>
#include <string>
#include <vector>

#include "curvlink/curvature.hpp"
#include "curvlink/evaluation.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/model.hpp"
#include "curvlink/training.hpp"

namespace curvlink {

struct PreparedMultiplex {
  Multiplex train;  // training edges and training anchors only
  std::array<EdgeSplit, 2> edges;
  AnchorSplit anchors;
  std::vector<std::string> warnings;
};

inline PreparedMultiplex prepare_multiplex(const Multiplex& mx, const SplitSpec& spec) {
  PreparedMultiplex out;
  const std::array<const Layer*, 2> layers{&mx.source, &mx.target};
  std::array<Layer, 2> train;
  for (int n = 0; n < 2; ++n) {
    SplitSpec s = spec;
    s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(n));
    out.edges[n] = split_edges(*layers[n], s);
    train[n] = layers[n]->with_edges(out.edges[n].train, layers[n]->name());
    out.warnings.insert(out.warnings.end(), out.edges[n].warnings.begin(), out.edges[n].warnings.end());
  }
  out.anchors = split_anchors(mx, spec);
  out.train = {std::move(train[0]), std::move(train[1]), out.anchors.train};
  return out;
}

inline std::array<CurvatureEstimate, 2> estimate_curvatures(const Multiplex& mx,
                                                            const RicciConfig& cfg,
                                                            std::size_t threads = 1) {
  return {estimate_kappa(mx.source, cfg, threads), estimate_kappa(mx.target, cfg, threads)};
}

struct ExperimentConfig {
  SplitSpec split;
  RicciConfig ricci;
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  DecoderConfig decoder;
  std::size_t hit_k = 10;
  std::size_t threads = 1;
};

struct ExperimentResult {
  std::array<Curvature, 2> kappa;
  TrainResult trained;
  std::array<IntraMetrics, 2> intra;
  RankResult ranks;
  double hit = 0.0;
  double mrr = 0.0;
  std::vector<std::string> warnings;
};

inline ExperimentResult run_experiment(const Multiplex& mx, const ExperimentConfig& cfg) {
  ExperimentResult out;
  const PreparedMultiplex data = prepare_multiplex(mx, cfg.split);
  out.warnings = data.warnings;
  const auto est = estimate_curvatures(data.train, cfg.ricci, cfg.threads);
  out.kappa = {est[0].kappa, est[1].kappa};
  const Encoder enc(data.train.source, data.train.target, data.train.anchors, out.kappa[0],
                    out.kappa[1], cfg.encoder);
  out.trained = train(enc, enc.init_params(cfg.train.seed), cfg.loss, cfg.train);
  out.warnings.insert(out.warnings.end(), out.trained.warnings.begin(), out.trained.warnings.end());
  for (int n = 0; n < 2; ++n) {
    out.intra[n] = evaluate_intra(out.trained.embeddings[n], out.kappa[n], data.edges[n].test,
                                  data.edges[n].test_negatives, cfg.decoder);
  }
  out.ranks = rank_candidates(detail::rowwise_log0(out.trained.embeddings[0], out.kappa[0]),
                              detail::rowwise_log0(out.trained.embeddings[1], out.kappa[1]),
                              data.anchors.test, false, cfg.threads);
  out.hit = hit_at_k(out.ranks, cfg.hit_k);
  out.mrr = mrr(out.ranks, cfg.hit_k);
  return out;
}

}  // namespace curvlink
