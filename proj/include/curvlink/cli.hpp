#pragma once

// Command-line front end. `run` parses argv and dispatches to a subcommand;
// output goes to the given streams so the commands are testable in-process.
//
// Exit codes: 0 success, 1 unexpected failure, 2 input error, 3 format error,
// 4 numeric divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "curvlink/checkpoint.hpp"
#include "curvlink/community.hpp"
#include "curvlink/config.hpp"
#include "curvlink/curvature.hpp"
#include "curvlink/error.hpp"
#include "curvlink/evaluation.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/model.hpp"
#include "curvlink/pipeline.hpp"
#include "curvlink/training.hpp"

namespace curvlink::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInput = 2, kFormat = 3, kDivergence = 4 };

namespace detail {

namespace fs = std::filesystem;

inline std::string fmt(double x) { return curvlink::detail::format_real(x); }

inline std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Config file plus one flag per configuration key. Flags win over the file.
struct ConfigOptions {
  std::string path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& app) {
    app.add_option("--config", path, "configuration file of 'key = value' lines");
    RunConfig probe;
    for (const auto& f : probe.fields()) {
      app.add_option_function<std::string>(
          flag_name(f.key), [this, key = f.key](const std::string& v) { overrides[key] = v; },
          f.help + " (default " + f.get() + ")")
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!path.empty()) cfg.load_file(path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    cfg.validate();
    return cfg;
  }
};

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create directory '" + dir + "'");
}

inline std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

inline std::vector<AnchorPair> load_dense_anchors(const std::string& path, std::size_t ns,
                                                  std::size_t nt) {
  const Layer s("source", ns, {}), t("target", nt, {});
  return load_anchors(path, s, t);
}

inline std::string history_header() {
  return "epoch\talternation\tL_in_source\tL_in_target\tL_n2s_source\tL_n2s_target\tL_er\t"
         "Q_source\tQ_target\tcommunities_source\tcommunities_target\ttotal\n";
}

inline std::string history_row(const HistoryRow& r) {
  const auto& p = r.parts;
  return std::to_string(r.epoch) + "\t" + std::to_string(r.alternation) + "\t" + fmt(p.l_in[0]) +
         "\t" + fmt(p.l_in[1]) + "\t" + fmt(p.l_n2s[0]) + "\t" + fmt(p.l_n2s[1]) + "\t" +
         fmt(p.l_er) + "\t" + fmt(p.q[0]) + "\t" + fmt(p.q[1]) + "\t" +
         std::to_string(r.communities[0]) + "\t" + std::to_string(r.communities[1]) + "\t" +
         fmt(r.total) + "\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct CurvatureArgs {
  std::string edges;
  bool delta = false;
  std::size_t delta_samples = 2000;
};

inline int cmd_curvature(const CurvatureArgs& a, RunConfig cfg, std::ostream& out,
                         std::ostream& err) {
  const Layer g = load_edge_list(a.edges, "input");
  RicciConfig rc = cfg.ricci;
  rc.seed = derive_seed(cfg.seed, 0x41cc);
  const CurvatureEstimate est = estimate_kappa(g, rc, cfg.threads);
  std::vector<double> values;
  for (const auto& [node, v] : est.node_values) values.push_back(v);
  out << "quantity\tvalue\n";
  out << "nodes\t" << g.node_count() << "\n";
  out << "edges\t" << g.edge_count() << "\n";
  out << "sampled_nodes\t" << values.size() << "\n";
  out << "mean_node_curvature\t" << detail::fmt(est.mean) << "\n";
  out << "kappa\t" << detail::fmt(est.kappa.value()) << "\n";
  out << "node_q1\t" << detail::fmt(detail::quantile(values, 0.25)) << "\n";
  out << "node_median\t" << detail::fmt(detail::quantile(values, 0.5)) << "\n";
  out << "node_q3\t" << detail::fmt(detail::quantile(values, 0.75)) << "\n";
  if (a.delta) {
    if (g.node_count() < 4) {
      err << "warning: delta-hyperbolicity needs at least 4 nodes; skipped\n";
    } else {
      out << "delta\t"
          << detail::fmt(delta_hyperbolicity(g, a.delta_samples, derive_seed(cfg.seed, 0xde17a)))
          << "\n";
    }
  }
  return kOk;
}

struct CommunitiesArgs {
  std::string edges;
  std::string checkpoint;
  std::string network = "source";
};

inline int cmd_communities(const CommunitiesArgs& a, RunConfig cfg, std::ostream& out,
                           std::ostream& err) {
  const Layer g = load_edge_list(a.edges, "input");
  Matrix points = Matrix::Zero(static_cast<Index>(g.node_count()), 1);
  Curvature k;
  if (!a.checkpoint.empty()) {
    const Checkpoint c = load_checkpoint(a.checkpoint);
    const int n = a.network == "target" ? 1 : 0;
    if (a.network != "source" && a.network != "target") {
      throw InputError("--network must be 'source' or 'target'");
    }
    points = c.require(std::string(kNetworkNames[n]) + ".embedding");
    k = c.kappa[n];
    if (static_cast<std::size_t>(points.rows()) != g.node_count()) {
      throw InputError("checkpoint embedding has " + std::to_string(points.rows()) +
                       " rows but the layer has " + std::to_string(g.node_count()) + " nodes");
    }
  }
  const Partition part = i_louvain(g, points, k, {.seed = derive_seed(cfg.seed, 0x10a7)});
  err << "communities: " << part.count << ", Q_NG = " << detail::fmt(modularity_ng(g, part))
      << "\n";
  out << "node\tcommunity\n";
  for (NodeId u = 0; u < g.node_count(); ++u) {
    out << g.labels()[u] << "\t" << part.assignment[u] << "\n";
  }
  return kOk;
}

struct SynthArgs {
  std::string out_dir;
};

// Writes, per layer, <layer>.edges, <layer>.blocks and <layer>.features, plus
// anchors.tsv with every anchor pair.
inline int cmd_synth(const SynthArgs& a, RunConfig cfg, std::ostream& out, std::ostream&) {
  SynthConfig sc = cfg.synth;
  sc.seed = derive_seed(cfg.seed, 0x5e7);
  const SynthMultiplex syn = synth_multiplex(sc);
  detail::ensure_dir(a.out_dir);
  const std::array<const Layer*, 2> layers{&syn.mx.source, &syn.mx.target};
  const std::array<const std::vector<std::size_t>*, 2> blocks{&syn.source_blocks,
                                                              &syn.target_blocks};
  for (int n = 0; n < 2; ++n) {
    const std::string name = kNetworkNames[n];
    save_edge_list(*layers[n], detail::join(a.out_dir, name + ".edges"));
    auto bout = curvlink::detail::open_output(detail::join(a.out_dir, name + ".blocks"));
    bout << "node\tblock\n";
    for (std::size_t i = 0; i < blocks[n]->size(); ++i) bout << i << "\t" << (*blocks[n])[i] << "\n";
    save_features(random_unit_features(layers[n]->node_count(), cfg.encoder.input_dim,
                                       derive_seed(sc.seed, static_cast<std::uint64_t>(n))),
                  detail::join(a.out_dir, name + ".features"));
  }
  save_anchors(syn.mx.anchors, detail::join(a.out_dir, "anchors.tsv"));
  out << "quantity\tvalue\n";
  out << "source_nodes\t" << syn.mx.source.node_count() << "\n";
  out << "source_edges\t" << syn.mx.source.edge_count() << "\n";
  out << "target_nodes\t" << syn.mx.target.node_count() << "\n";
  out << "target_edges\t" << syn.mx.target.edge_count() << "\n";
  out << "anchors\t" << syn.mx.anchors.size() << "\n";
  out << "overlap\t" << detail::fmt(overlap_ratio(syn.mx)) << "\n";
  return kOk;
}

struct TrainArgs {
  std::string source;
  std::string target;
  std::string anchors;
  std::string source_features;
  std::string target_features;
  std::string out_dir;
};

// Splits the data, estimates curvature on the training graphs, trains, and
// writes config.txt, split files, history.tsv and checkpoint.bin.
inline int cmd_train(const TrainArgs& a, RunConfig cfg, std::ostream& out, std::ostream& err) {
  Multiplex mx;
  mx.source = load_edge_list(a.source, "source");
  mx.target = load_edge_list(a.target, "target");
  mx.anchors = load_anchors(a.anchors, mx.source, mx.target);
  if (!a.source_features.empty()) mx.source.set_features(load_features(a.source_features));
  if (!a.target_features.empty()) mx.target.set_features(load_features(a.target_features));

  const ExperimentConfig ec = cfg.experiment();
  const std::string config_text = cfg.to_text();
  out << "# effective configuration\n" << config_text;

  detail::ensure_dir(a.out_dir);
  {
    auto cf = curvlink::detail::open_output(detail::join(a.out_dir, "config.txt"));
    cf << config_text;
  }
  const PreparedMultiplex data = prepare_multiplex(mx, ec.split);
  for (const auto& w : data.warnings) err << "warning: " << w << "\n";
  for (int n = 0; n < 2; ++n) {
    const std::string name = kNetworkNames[n];
    const std::size_t nodes = n == 0 ? mx.source.node_count() : mx.target.node_count();
    const EdgeSplit& s = data.edges[n];
    save_edges(s.train, nodes, detail::join(a.out_dir, name + ".train.edges"));
    save_edges(s.val, nodes, detail::join(a.out_dir, name + ".val.edges"));
    save_edges(s.test, nodes, detail::join(a.out_dir, name + ".test.edges"));
    save_edges(s.val_negatives, nodes, detail::join(a.out_dir, name + ".val.neg"));
    save_edges(s.test_negatives, nodes, detail::join(a.out_dir, name + ".test.neg"));
  }
  save_anchors(data.anchors.train, detail::join(a.out_dir, "anchors.train"));
  save_anchors(data.anchors.val, detail::join(a.out_dir, "anchors.val"));
  save_anchors(data.anchors.test, detail::join(a.out_dir, "anchors.test"));

  const auto est = estimate_curvatures(data.train, ec.ricci, ec.threads);
  const std::array<Curvature, 2> kappa{est[0].kappa, est[1].kappa};
  const Encoder enc(data.train.source, data.train.target, data.train.anchors, kappa[0], kappa[1],
                    ec.encoder);
  const TrainResult r = train(enc, enc.init_params(ec.train.seed), ec.loss, ec.train);
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";

  {
    auto hf = curvlink::detail::open_output(detail::join(a.out_dir, "history.tsv"));
    hf << detail::history_header();
    for (const auto& row : r.history) hf << detail::history_row(row);
  }
  save_checkpoint(make_checkpoint(r.params, kappa, r.embeddings, config_text),
                  detail::join(a.out_dir, "checkpoint.bin"));

  out << "quantity\tvalue\n";
  out << "kappa_source\t" << detail::fmt(kappa[0].value()) << "\n";
  out << "kappa_target\t" << detail::fmt(kappa[1].value()) << "\n";
  out << "epochs\t" << r.history.size() << "\n";
  if (!r.history.empty()) out << "final_total\t" << detail::fmt(r.history.back().total) << "\n";
  if (r.divergence) {
    err << "error: training diverged: " << *r.divergence
        << "; checkpoint holds the last finite parameters\n";
    return kDivergence;
  }
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string split_dir;
  std::string split = "test";
  std::string dump;
};

inline int cmd_eval_intra(const EvalArgs& a, RunConfig cfg, std::ostream& out, std::ostream&) {
  if (a.split != "test" && a.split != "val") throw InputError("--split must be 'test' or 'val'");
  const Checkpoint c = load_checkpoint(a.checkpoint);
  out << "metric\tvalue\n";
  for (int n = 0; n < 2; ++n) {
    const std::string name = kNetworkNames[n];
    const Matrix& emb = c.require(name + ".embedding");
    const auto pos = load_edges(detail::join(a.split_dir, name + "." + a.split + ".edges"));
    const auto neg = load_edges(detail::join(a.split_dir, name + "." + a.split + ".neg"));
    const IntraMetrics m = evaluate_intra(emb, c.kappa[n], pos, neg, cfg.decoder);
    out << name << ".auc\t" << detail::fmt(m.auc) << "\n";
    out << name << ".f1\t" << detail::fmt(m.f1) << "\n";
  }
  return kOk;
}

inline int cmd_eval_inter(const EvalArgs& a, RunConfig cfg, std::ostream& out, std::ostream&) {
  if (a.split != "test" && a.split != "val") throw InputError("--split must be 'test' or 'val'");
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const Matrix& es = c.require("source.embedding");
  const Matrix& et = c.require("target.embedding");
  const auto anchors = detail::load_dense_anchors(detail::join(a.split_dir, "anchors." + a.split),
                                                  static_cast<std::size_t>(es.rows()),
                                                  static_cast<std::size_t>(et.rows()));
  const RankResult r = rank_candidates(curvlink::detail::rowwise_log0(es, c.kappa[0]),
                                       curvlink::detail::rowwise_log0(et, c.kappa[1]), anchors,
                                       !a.dump.empty(), cfg.threads);
  const std::string k = std::to_string(cfg.hit_k);
  out << "metric\tvalue\n";
  out << "anchors\t" << anchors.size() << "\n";
  out << "hit@" << k << "\t" << detail::fmt(hit_at_k(r, cfg.hit_k)) << "\n";
  out << "mrr@" << k << "\t" << detail::fmt(mrr(r, cfg.hit_k)) << "\n";
  if (!a.dump.empty()) {
    auto d = curvlink::detail::open_output(a.dump);
    d << "source\ttruth\trank\ttop" << k << "\n";
    for (const auto& e : r.entries) {
      d << e.source << "\t" << e.truth << "\t" << e.truth_rank << "\t";
      for (std::size_t i = 0; i < std::min(cfg.hit_k, e.candidates.size()); ++i) {
        d << (i ? "," : "") << e.candidates[i].node;
      }
      d << "\n";
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curvature-aware multiplex link prediction and alignment", "curvlink"};
  app.require_subcommand(1);

  detail::ConfigOptions opts;
  CurvatureArgs curv;
  CommunitiesArgs comm;
  SynthArgs synth;
  TrainArgs tr;
  EvalArgs ev_intra, ev_inter;

  auto* c_curv = app.add_subcommand("curvature", "estimate the curvature of an edge list");
  c_curv->add_option("edges", curv.edges, "edge list")->required();
  c_curv->add_flag("--delta", curv.delta, "also report sampled delta-hyperbolicity");
  c_curv->add_option("--delta-samples", curv.delta_samples, "quadruples sampled for delta");

  auto* c_comm = app.add_subcommand("communities", "run I-Louvain on an edge list");
  c_comm->add_option("edges", comm.edges, "edge list")->required();
  c_comm->add_option("--checkpoint", comm.checkpoint, "take embeddings and curvature from here");
  c_comm->add_option("--network", comm.network, "source or target embedding of the checkpoint");

  auto* c_synth = app.add_subcommand("synth", "generate a synthetic two-layer multiplex");
  c_synth->add_option("--out-dir", synth.out_dir, "output directory")->required();

  auto* c_train = app.add_subcommand("train", "train the encoder");
  c_train->add_option("--source", tr.source, "source edge list")->required();
  c_train->add_option("--target", tr.target, "target edge list")->required();
  c_train->add_option("--anchors", tr.anchors, "anchor pairs 'source target'")->required();
  c_train->add_option("--source-features", tr.source_features, "source feature matrix");
  c_train->add_option("--target-features", tr.target_features, "target feature matrix");
  c_train->add_option("--out-dir", tr.out_dir, "output directory")->required();

  auto* c_intra = app.add_subcommand("eval-intra", "intra-link AUC and F1 from a checkpoint");
  auto* c_inter = app.add_subcommand("eval-inter", "anchor ranking hit@k and MRR from a checkpoint");
  for (auto [cmd, args] : {std::pair{c_intra, &ev_intra}, std::pair{c_inter, &ev_inter}}) {
    cmd->add_option("--checkpoint", args->checkpoint, "checkpoint written by train")->required();
    cmd->add_option("--split-dir", args->split_dir, "directory with the split files")->required();
    cmd->add_option("--split", args->split, "test or val");
  }
  c_inter->add_option("--dump", ev_inter.dump, "write per-anchor ranks and top-k lists here");
  c_inter->add_option_function<std::string>(
      "-k,--k", [&opts](const std::string& v) { opts.overrides["hit_k"] = v; }, "alias of --hit-k")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  for (auto* cmd : {c_curv, c_comm, c_synth, c_train, c_intra, c_inter}) opts.attach(*cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kInput;
  }

  try {
    const RunConfig cfg = opts.resolve();
    if (*c_curv) return cmd_curvature(curv, cfg, out, err);
    if (*c_comm) return cmd_communities(comm, cfg, out, err);
    if (*c_synth) return cmd_synth(synth, cfg, out, err);
    if (*c_train) return cmd_train(tr, cfg, out, err);
    if (*c_intra) return cmd_eval_intra(ev_intra, cfg, out, err);
    if (*c_inter) return cmd_eval_inter(ev_inter, cfg, out, err);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kInput;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace curvlink::cli
