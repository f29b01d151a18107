#pragma once

// Run configuration: every tunable of the pipeline under one flat key space.
// Files hold "key = value" lines; '#' starts a comment.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "curvlink/curvature.hpp"
#include "curvlink/error.hpp"
#include "curvlink/evaluation.hpp"
#include "curvlink/graph.hpp"
#include "curvlink/model.hpp"
#include "curvlink/pipeline.hpp"
#include "curvlink/training.hpp"

namespace curvlink {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  RicciConfig ricci;
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  DecoderConfig decoder;
  std::size_t hit_k = 10;
  SplitSpec split;
  SynthConfig synth;

  struct Field {
    std::string key;
    std::string help;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  // Keys in echo order.
  std::vector<Field> fields();

  void set(const std::string& key, const std::string& value) {
    for (auto& f : fields()) {
      if (f.key == key) {
        f.set(value);
        return;
      }
    }
    throw InputError("unknown configuration key '" + key + "'");
  }

  std::string get(const std::string& key) {
    for (auto& f : fields())
      if (f.key == key) return f.get();
    throw InputError("unknown configuration key '" + key + "'");
  }

  void validate() const {
    ricci.validate();
    encoder.validate();
    loss.validate();
    train.validate();
    decoder.validate();
    split.edges.validate("edge");
    split.anchors.validate("anchor");
    if (hit_k < 1) throw InputError("hit_k must be at least 1");
    if (threads < 1) throw InputError("threads must be at least 1");
  }

  // Seeds of every component derive from `seed`.
  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.split = split;
    e.split.seed = derive_seed(seed, 0x5911);
    e.ricci = ricci;
    e.ricci.seed = derive_seed(seed, 0x41cc);
    e.encoder = encoder;
    e.loss = loss;
    e.train = train;
    e.train.seed = derive_seed(seed, 0x7a1);
    e.decoder = decoder;
    e.hit_k = hit_k;
    e.threads = threads;
    return e;
  }

  std::string to_text() {
    std::string out;
    for (auto& f : fields()) out += f.key + " = " + f.get() + "\n";
    return out;
  }

  void load_text(const std::string& text, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw InputError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      try {
        set(key, value);
      } catch (const InputError& e) {
        throw InputError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw InputError("'" + key + "' expects a real number, got '" + v + "'");
  }
  return out;
}

template <typename T>
T parse_count(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw InputError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

// Shortest decimal form that parses back to the same double.
inline std::string format_real(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::vector<RunConfig::Field> RunConfig::fields() {
  std::vector<Field> f;
  auto real = [&f](std::string key, std::string help, double& ref) {
    f.push_back({key, std::move(help), [&ref, key](const std::string& v) { ref = detail::parse_real(key, v); },
                 [&ref] { return detail::format_real(ref); }});
  };
  auto count = [&f]<typename T>(std::string key, std::string help, T& ref) {
    f.push_back({key, std::move(help),
                 [&ref, key](const std::string& v) { ref = detail::parse_count<T>(key, v); },
                 [&ref] { return std::to_string(ref); }});
  };
  count("seed", "master seed; every component derives its own stream", seed);
  count("threads", "worker threads for the parallel sections", threads);
  real("ricci_alpha", "laziness of the Ollivier-Ricci random walk", ricci.alpha);
  count("ricci_samples", "nodes sampled for the curvature estimate", ricci.sample_count);
  count("input_dim", "base embedding dimension for layers without features", encoder.input_dim);
  count("hidden_dim", "hidden dimension of the encoder", encoder.hidden_dim);
  count("output_dim", "output embedding dimension", encoder.output_dim);
  count("layers", "stacked attention layers", encoder.layers);
  real("dropout", "attention dropout rate", encoder.dropout);
  real("alpha_q", "weight of the modularity term", loss.alpha_q);
  real("tau", "temperature of all contrastive similarities", loss.tau);
  real("q_sign", "sign of the modularity term in the minimized objective", loss.q_sign);
  real("lr", "learning rate of both optimizers", train.lr);
  count("batch_size", "nodes per step; larger layers are subsampled", train.batch_size);
  count("alternations", "outer alternations (community refresh)", train.alternations);
  count("epochs", "epochs per alternation", train.epochs);
  real("decoder_r", "Fermi-Dirac distance offset", decoder.r);
  real("decoder_t", "Fermi-Dirac temperature", decoder.t);
  real("threshold", "F1 decision threshold on decoder scores", decoder.threshold);
  count("hit_k", "cutoff for hit@k and MRR", hit_k);
  real("edge_train", "training fraction of intra-links", split.edges.train);
  real("edge_val", "validation fraction of intra-links", split.edges.val);
  real("edge_test", "test fraction of intra-links", split.edges.test);
  real("anchor_train", "training fraction of anchors", split.anchors.train);
  real("anchor_val", "validation fraction of anchors", split.anchors.val);
  real("anchor_test", "test fraction of anchors", split.anchors.test);
  count("synth_blocks", "blocks of the synthetic generator", synth.blocks);
  count("synth_nodes", "nodes per synthetic layer", synth.nodes);
  real("synth_p_in", "intra-block edge probability", synth.p_in);
  real("synth_p_out", "inter-block edge probability", synth.p_out);
  real("synth_overlap", "anchor overlap ratio", synth.overlap);
  real("synth_noise", "edge noise of the second layer", synth.noise);
  return f;
}

}  // namespace curvlink
