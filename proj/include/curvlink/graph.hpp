#pragma once

// Multiplex network data model: layers, anchors, file formats, splits and a
// synthetic two-layer generator.
//
// File formats (all plain text, '#' starts a comment line):
//   edge list   one undirected edge per line, "u v" with non-negative ints.
//               An optional "# nodes: N" line fixes the id range to [0, N)
//               and disables id densification (keeps isolated nodes).
//   anchors     "source_id target_id" per line, ids as in the edge files.
//   features    first line "N d", then N rows of d reals.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/rng.hpp"

namespace curvlink {

using NodeId = std::uint32_t;

// Undirected edge, normalized so that u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  static Edge make(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct AnchorPair {
  NodeId source = 0;
  NodeId target = 0;
  friend auto operator<=>(const AnchorPair&, const AnchorPair&) = default;
};

class Layer {
 public:
  Layer() = default;

  // Builds a layer over nodes [0, n). Duplicate edges are merged; self-loops
  // and out-of-range ids are rejected.
  Layer(std::string name, std::size_t n, std::span<const Edge> edges)
      : name_(std::move(name)), adjacency_(n) {
    for (const Edge& raw : edges) {
      if (raw.u == raw.v) {
        throw InputError("layer '" + name_ + "': self-loop on node " +
                         std::to_string(raw.u));
      }
      if (raw.u >= n || raw.v >= n) {
        throw InputError("layer '" + name_ + "': node id out of range");
      }
      edges_.push_back(Edge::make(raw.u, raw.v));
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    for (const Edge& e : edges_) {
      adjacency_[e.u].push_back(e.v);
      adjacency_[e.v].push_back(e.u);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
    labels_.resize(n);
    for (std::size_t i = 0; i < n; ++i) labels_[i] = static_cast<std::int64_t>(i);
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t node_count() const noexcept { return adjacency_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::span<const NodeId> neighbors(NodeId u) const { return adjacency_.at(u); }
  std::size_t degree(NodeId u) const { return adjacency_.at(u).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    if (a >= node_count() || b >= node_count()) return false;
    const auto& nb = adjacency_[a];
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  const std::optional<Eigen::MatrixXd>& features() const noexcept { return features_; }

  void set_features(Eigen::MatrixXd x) {
    if (static_cast<std::size_t>(x.rows()) != node_count()) {
      throw InputError("layer '" + name_ + "': feature matrix has " +
                       std::to_string(x.rows()) + " rows for " +
                       std::to_string(node_count()) + " nodes");
    }
    features_ = std::move(x);
  }

  // Original (file) id of each dense node id.
  const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<std::int64_t> labels) {
    if (labels.size() != node_count()) throw InputError("label count mismatch");
    if (!std::is_sorted(labels.begin(), labels.end())) throw InputError("labels must be sorted");
    labels_ = std::move(labels);
  }

  // Labels are kept sorted, so a binary search maps file ids to dense ids.
  std::optional<NodeId> find_label(std::int64_t label) const {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return {};
    return static_cast<NodeId>(it - labels_.begin());
  }

  Layer with_edges(std::span<const Edge> edges, std::string name) const {
    Layer out(std::move(name), node_count(), edges);
    out.labels_ = labels_;
    out.features_ = features_;
    return out;
  }

 private:
  std::string name_;
  std::vector<std::vector<NodeId>> adjacency_;
  std::vector<Edge> edges_;
  std::vector<std::int64_t> labels_;
  std::optional<Eigen::MatrixXd> features_;
};

// Two layers plus the anchor set. Each node appears in at most one anchor
// pair per side.
struct Multiplex {
  Layer source;
  Layer target;
  std::vector<AnchorPair> anchors;
};

inline void validate_anchors(const Layer& source, const Layer& target,
                             std::span<const AnchorPair> anchors) {
  std::vector<char> used_s(source.node_count(), 0);
  std::vector<char> used_t(target.node_count(), 0);
  for (const AnchorPair& a : anchors) {
    if (a.source >= source.node_count() || a.target >= target.node_count()) {
      throw InputError("anchor (" + std::to_string(a.source) + ", " +
                       std::to_string(a.target) + ") out of range");
    }
    if (used_s[a.source]++) {
      throw InputError("source node " + std::to_string(a.source) +
                       " appears in more than one anchor");
    }
    if (used_t[a.target]++) {
      throw InputError("target node " + std::to_string(a.target) +
                       " appears in more than one anchor");
    }
  }
}

// ---------------------------------------------------------------------------
// Graph utilities

inline constexpr int kUnreachable = -1;

// Hop distances from `src`; kUnreachable beyond max_depth or off-component.
inline std::vector<int> bfs_distances(const Layer& g, NodeId src,
                                      int max_depth = std::numeric_limits<int>::max()) {
  std::vector<int> dist(g.node_count(), kUnreachable);
  std::queue<NodeId> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    if (dist[u] >= max_depth) continue;
    for (NodeId w : g.neighbors(u)) {
      if (dist[w] == kUnreachable) {
        dist[w] = dist[u] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

// Component id per node, ids dense in order of the smallest member.
inline std::vector<std::size_t> connected_components(const Layer& g,
                                                     std::size_t* count = nullptr) {
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> comp(g.node_count(), none);
  std::size_t next = 0;
  for (NodeId s = 0; s < g.node_count(); ++s) {
    if (comp[s] != none) continue;
    std::vector<NodeId> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId w : g.neighbors(u)) {
        if (comp[w] == none) {
          comp[w] = next;
          stack.push_back(w);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

// ---------------------------------------------------------------------------
// File I/O

struct LoadStats {
  std::size_t lines = 0;
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.precision(17);
  return out;
}

inline bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Parses "a b" into two non-negative integers; false on anything else.
inline bool parse_pair(const std::string& line, std::int64_t& a, std::int64_t& b) {
  std::istringstream ss(line);
  std::string rest;
  if (!(ss >> a >> b) || a < 0 || b < 0) return false;
  return !(ss >> rest);
}

inline std::optional<std::size_t> parse_nodes_directive(const std::string& line) {
  std::istringstream ss(line);
  std::string hash, key;
  std::int64_t n = -1;
  if (!(ss >> hash >> key >> n) || hash != "#" || key != "nodes:" || n < 0) return {};
  return static_cast<std::size_t>(n);
}

}  // namespace detail

inline Layer load_edge_list(const std::string& path, std::string name = {},
                            LoadStats* stats = nullptr) {
  auto in = detail::open_input(path);
  if (name.empty()) name = path;
  LoadStats st;
  std::optional<std::size_t> declared;
  std::vector<std::pair<std::int64_t, std::int64_t>> raw;
  std::string line;
  while (std::getline(in, line)) {
    ++st.lines;
    if (detail::is_blank(line)) continue;
    if (line.front() == '#') {
      if (auto n = detail::parse_nodes_directive(line)) declared = n;
      continue;
    }
    std::int64_t a = 0, b = 0;
    if (!detail::parse_pair(line, a, b)) {
      throw InputError(path + ":" + std::to_string(st.lines) +
                       ": expected two non-negative integers");
    }
    if (a == b) {
      ++st.self_loops;
      continue;
    }
    raw.emplace_back(a, b);
  }

  std::vector<std::int64_t> labels;
  if (declared) {
    labels.resize(*declared);
    for (std::size_t i = 0; i < *declared; ++i) labels[i] = static_cast<std::int64_t>(i);
    for (auto [a, b] : raw) {
      if (static_cast<std::size_t>(std::max(a, b)) >= *declared) {
        throw InputError(path + ": node id exceeds the declared node count");
      }
    }
  } else {
    for (auto [a, b] : raw) {
      labels.push_back(a);
      labels.push_back(b);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  }
  auto dense = [&](std::int64_t id) {
    return static_cast<NodeId>(std::lower_bound(labels.begin(), labels.end(), id) -
                               labels.begin());
  };
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  for (auto [a, b] : raw) edges.push_back(Edge::make(dense(a), dense(b)));
  std::sort(edges.begin(), edges.end());
  const auto before = edges.size();
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  st.duplicates = before - edges.size();

  Layer layer(std::move(name), labels.size(), edges);
  layer.set_labels(std::move(labels));
  if (stats) *stats = st;
  return layer;
}

inline void save_edge_list(const Layer& layer, const std::string& path) {
  auto out = detail::open_output(path);
  out << "# nodes: " << layer.node_count() << "\n";
  for (const Edge& e : layer.edges()) out << e.u << ' ' << e.v << '\n';
}

inline void save_edges(std::span<const Edge> edges, std::size_t node_count,
                       const std::string& path) {
  auto out = detail::open_output(path);
  out << "# nodes: " << node_count << "\n";
  for (const Edge& e : edges) out << e.u << ' ' << e.v << '\n';
}

// Edges of a split file, as written by save_edges (duplicates preserved).
inline std::vector<Edge> load_edges(const std::string& path, std::size_t* node_count = nullptr) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    if (line.front() == '#') {
      if (auto n = detail::parse_nodes_directive(line); n && node_count) *node_count = *n;
      continue;
    }
    std::int64_t a = 0, b = 0;
    if (!detail::parse_pair(line, a, b)) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": expected two non-negative integers");
    }
    edges.push_back(Edge::make(static_cast<NodeId>(a), static_cast<NodeId>(b)));
  }
  return edges;
}

inline Eigen::MatrixXd load_features(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  std::int64_t n = -1, d = -1;
  while (std::getline(in, line)) {
    if (detail::is_blank(line) || line.front() == '#') continue;
    std::istringstream ss(line);
    if (!(ss >> n >> d) || n < 0 || d <= 0) {
      throw InputError(path + ": expected header 'N d'");
    }
    break;
  }
  if (n < 0) throw InputError(path + ": empty feature file");
  Eigen::MatrixXd x(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) {
      if (!(in >> x(i, j))) {
        throw InputError(path + ": feature row " + std::to_string(i) + " is incomplete");
      }
    }
  }
  if (!x.allFinite()) throw InputError(path + ": non-finite feature value");
  return x;
}

inline void save_features(const Eigen::MatrixXd& x, const std::string& path) {
  auto out = detail::open_output(path);
  out << x.rows() << ' ' << x.cols() << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? " " : "") << x(i, j);
    out << '\n';
  }
}

inline std::vector<AnchorPair> load_anchors(const std::string& path, const Layer& source,
                                            const Layer& target) {
  auto in = detail::open_input(path);
  std::vector<AnchorPair> anchors;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line) || line.front() == '#') continue;
    std::int64_t a = 0, b = 0;
    if (!detail::parse_pair(line, a, b)) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": expected two non-negative integers");
    }
    auto s = source.find_label(a);
    auto t = target.find_label(b);
    if (!s || !t) {
      throw InputError(path + ":" + std::to_string(lineno) + ": anchor id out of range");
    }
    anchors.push_back({*s, *t});
  }
  validate_anchors(source, target, anchors);
  return anchors;
}

inline void save_anchors(std::span<const AnchorPair> anchors, const std::string& path) {
  auto out = detail::open_output(path);
  for (const AnchorPair& a : anchors) out << a.source << ' ' << a.target << '\n';
}

// Seeded random unit-norm rows; stand-in features for layers without any.
inline Eigen::MatrixXd random_unit_features(std::size_t n, Eigen::Index dim,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xfea7));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double norm = 0.0;
    while (norm < 1e-12) {
      for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = gauss(rng);
      norm = x.row(i).norm();
    }
    x.row(i) /= norm;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitFractions {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;

  void validate(const char* what) const {
    if (train < 0 || val < 0 || test < 0 ||
        std::abs(train + val + test - 1.0) > 1e-9) {
      throw InputError(std::string(what) + " split fractions must be non-negative and sum to 1");
    }
  }
};

struct SplitSpec {
  SplitFractions edges{0.80, 0.05, 0.15};
  SplitFractions anchors{0.65, 0.10, 0.25};
  std::uint64_t seed = 0;
};

struct EdgeSplit {
  std::vector<Edge> train, val, test;
  // One sampled non-edge per held-out edge.
  std::vector<Edge> val_negatives, test_negatives;
  std::vector<std::string> warnings;
};

struct AnchorSplit {
  std::vector<AnchorPair> train, val, test;
};

namespace detail {

// Counts per part: held-out parts are rounded, train takes the remainder.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f) {
  const auto val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  const auto test = static_cast<std::size_t>(std::llround(f.test * static_cast<double>(n)));
  if (val + test > n) throw InputError("split leaves no room for training items");
  return {n - val - test, val, test};
}

}  // namespace detail

// Uniformly sampled node pairs that are not edges of `g`, distinct from each
// other and from everything in `exclude`.
inline std::vector<Edge> sample_non_edges(const Layer& g, std::size_t count, Rng& rng,
                                          std::set<Edge>* exclude = nullptr) {
  const std::size_t n = g.node_count();
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double free_pairs = pairs - static_cast<double>(g.edge_count()) -
                            static_cast<double>(exclude ? exclude->size() : 0);
  if (n < 2 || free_pairs < static_cast<double>(count)) {
    throw InputError("layer '" + g.name() + "' has too few non-edges to sample negatives");
  }
  std::set<Edge> local;
  std::set<Edge>& seen = exclude ? *exclude : local;
  std::vector<Edge> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto a = static_cast<NodeId>(uniform_index(rng, n));
    const auto b = static_cast<NodeId>(uniform_index(rng, n));
    if (a == b || g.has_edge(a, b)) continue;
    const Edge e = Edge::make(a, b);
    if (!seen.insert(e).second) continue;
    out.push_back(e);
  }
  return out;
}

inline EdgeSplit split_edges(const Layer& layer, const SplitSpec& spec) {
  spec.edges.validate("edge");
  if (layer.edge_count() < 10) {
    throw InputError("layer '" + layer.name() + "' needs at least 10 edges to split");
  }
  Rng rng = make_rng(spec.seed, 0x5e1175);
  std::vector<Edge> edges = layer.edges();
  shuffle(edges, rng);
  const auto [n_train, n_val, n_test] = detail::split_counts(edges.size(), spec.edges);
  EdgeSplit out;
  out.train.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train),
                 edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());

  std::set<Edge> used;
  out.val_negatives = sample_non_edges(layer, n_val, rng, &used);
  out.test_negatives = sample_non_edges(layer, n_test, rng, &used);

  std::size_t components = 0;
  connected_components(layer.with_edges(out.train, layer.name()), &components);
  if (components > layer.node_count() / 2) {
    out.warnings.push_back("training graph of '" + layer.name() + "' has " +
                           std::to_string(components) + " components for " +
                           std::to_string(layer.node_count()) + " nodes");
  }
  return out;
}

inline AnchorSplit split_anchors(const Multiplex& mx, const SplitSpec& spec) {
  spec.anchors.validate("anchor");
  Rng rng = make_rng(spec.seed, 0xa9c404);
  std::vector<AnchorPair> anchors = mx.anchors;
  std::sort(anchors.begin(), anchors.end());
  shuffle(anchors, rng);
  const auto [n_train, n_val, n_test] = detail::split_counts(anchors.size(), spec.anchors);
  AnchorSplit out;
  out.train.assign(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(anchors.begin() + static_cast<std::ptrdiff_t>(n_train),
                 anchors.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(anchors.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                  anchors.end());
  return out;
}

// eta = 2 |anchors| / (N_s + N_t).
inline double overlap_ratio(const Multiplex& mx) {
  const double total =
      static_cast<double>(mx.source.node_count() + mx.target.node_count());
  if (total == 0.0) return 0.0;
  return 2.0 * static_cast<double>(mx.anchors.size()) / total;
}

// ---------------------------------------------------------------------------
// Synthetic multiplex

struct SynthConfig {
  std::size_t blocks = 4;
  std::size_t nodes = 200;
  double p_in = 0.15;
  double p_out = 0.01;
  double overlap = 0.20;
  double noise = 0.10;
  std::uint64_t seed = 0;
};

struct SynthMultiplex {
  Multiplex mx;
  // Target id of every source node (the full hidden correspondence).
  std::vector<NodeId> mapping;
  std::vector<std::size_t> source_blocks;
  std::vector<std::size_t> target_blocks;
};

// Stochastic block model layer, a perturbed copy with shuffled ids, and the
// anchors that realize the requested overlap. The copy drops each edge with
// probability `noise` and adds one uniformly random non-edge per dropped edge.
inline SynthMultiplex synth_multiplex(const SynthConfig& cfg) {
  if (cfg.blocks == 0 || cfg.blocks > cfg.nodes) {
    throw InputError("synth: need 1 <= blocks <= nodes");
  }
  if (!(cfg.p_in > cfg.p_out) || cfg.p_out < 0.0 || cfg.p_in > 1.0) {
    throw InputError("synth: need 0 <= q < p <= 1");
  }
  if (cfg.overlap < 0.0 || cfg.overlap > 1.0) throw InputError("synth: eta must lie in [0, 1]");
  if (cfg.noise < 0.0 || cfg.noise > 1.0) throw InputError("synth: rho must lie in [0, 1]");
  if (cfg.nodes < 2) throw InputError("synth: need at least two nodes");

  const std::size_t n = cfg.nodes;
  SynthMultiplex out;
  out.source_blocks.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.source_blocks[i] = i * cfg.blocks / n;

  Rng rng = make_rng(cfg.seed, 0x5b3);
  std::vector<Edge> base;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      const double p = out.source_blocks[i] == out.source_blocks[j] ? cfg.p_in : cfg.p_out;
      if (uniform01(rng) < p) base.push_back({i, j});
    }
  }
  Layer source("source", n, base);

  Rng noise_rng = make_rng(cfg.seed, 0x401e);
  std::vector<Edge> kept;
  std::size_t dropped = 0;
  for (const Edge& e : source.edges()) {
    if (uniform01(noise_rng) < cfg.noise) {
      ++dropped;
    } else {
      kept.push_back(e);
    }
  }
  {
    std::set<Edge> present(source.edges().begin(), source.edges().end());
    const auto added = sample_non_edges(source, dropped, noise_rng, &present);
    kept.insert(kept.end(), added.begin(), added.end());
  }

  Rng perm_rng = make_rng(cfg.seed, 0x9e7);
  const auto perm = random_permutation(n, perm_rng);
  out.mapping.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.mapping[i] = static_cast<NodeId>(perm[i]);
  std::vector<Edge> mapped;
  mapped.reserve(kept.size());
  for (const Edge& e : kept) mapped.push_back(Edge::make(out.mapping[e.u], out.mapping[e.v]));
  Layer target("target", n, mapped);

  out.target_blocks.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.target_blocks[out.mapping[i]] = out.source_blocks[i];

  // eta = 2|D| / (N_s + N_t) with N_s = N_t = n.
  const auto anchor_count =
      static_cast<std::size_t>(std::llround(cfg.overlap * static_cast<double>(n)));
  Rng anchor_rng = make_rng(cfg.seed, 0xa11c);
  auto chosen = sample_without_replacement(n, anchor_count, anchor_rng);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t s : chosen) {
    out.mx.anchors.push_back({static_cast<NodeId>(s), out.mapping[s]});
  }
  out.mx.source = std::move(source);
  out.mx.target = std::move(target);
  return out;
}

}  // namespace curvlink
