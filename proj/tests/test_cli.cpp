#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "curvlink/cli.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace curvlink;
using namespace curvlink::testing;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "curvlink");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses "key\tvalue" rows after the header.
std::map<std::string, std::string> rows(const std::string& tsv) {
  std::map<std::string, std::string> m;
  std::istringstream in(tsv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) m[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return m;
}

std::vector<std::vector<std::string>> table(const std::string& path) {
  std::vector<std::vector<std::string>> t;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, '\t')) cells.push_back(c);
    t.push_back(cells);
  }
  return t;
}

// Complete binary tree on 15 nodes.
std::string tree_edges() {
  std::string s;
  for (int i = 1; i < 15; ++i) s += std::to_string((i - 1) / 2) + " " + std::to_string(i) + "\n";
  return s;
}

const std::vector<std::string> kSmall{"--synth-nodes", "40",  "--synth-blocks", "2",
                                      "--input-dim",   "8",   "--hidden-dim",   "8",
                                      "--output-dim",  "8",   "--ricci-samples", "20",
                                      "--alternations", "1",  "--epochs",       "3",
                                      "--synth-overlap", "0.5"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

class CliData : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto r = run_cli(with_small({"synth", "--out-dir", dir.path("data")}));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  std::vector<std::string> train_args(const std::string& out_dir,
                                      const std::string& anchors = {}) const {
    return with_small({"train", "--source", dir.path("data/source.edges"), "--target",
                       dir.path("data/target.edges"), "--anchors",
                       anchors.empty() ? dir.path("data/anchors.tsv") : anchors,
                       "--source-features", dir.path("data/source.features"),
                       "--target-features", dir.path("data/target.features"), "--out-dir",
                       out_dir});
  }

  ScratchDir dir{"curvlink_cli"};
};

}  // namespace

// Without laziness a tree is negatively curved. With the default laziness of
// one half every leaf edge scores 1/deg > 0 and leaves dominate a small tree.
TEST(CliCurvature, TreeMatchesTransportOracle) {
  ScratchDir dir("curvlink_cli");
  const auto path = dir.file("tree.edges", tree_edges());
  const auto r = run_cli({"curvature", path, "--ricci-alpha", "0"});
  ASSERT_EQ(r.code, 0) << r.err;

  const Layer g = load_edge_list(path);
  double total = 0.0;
  for (NodeId u = 0; u < g.node_count(); ++u) {
    double s = 0.0;
    for (NodeId w : g.neighbors(u)) s += oracle_ricci_edge(g, u, w, 0.0);
    total += s / static_cast<double>(g.degree(u));
  }
  const double expected = total / static_cast<double>(g.node_count());
  ASSERT_LT(expected, 0.0);

  const auto m = rows(r.out);
  EXPECT_NEAR(std::stod(m.at("kappa")), expected, 1e-10);
  EXPECT_EQ(m.at("nodes"), "15");
  EXPECT_EQ(m.at("sampled_nodes"), "15");
  EXPECT_LE(std::stod(m.at("node_q1")), std::stod(m.at("node_median")));
  EXPECT_LE(std::stod(m.at("node_median")), std::stod(m.at("node_q3")));
}

TEST(CliCurvature, FullLazinessIsFlat) {
  ScratchDir dir("curvlink_cli");
  const auto r = run_cli({"curvature", dir.file("tree.edges", tree_edges()), "--ricci-alpha", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rows(r.out).at("kappa"), "0");
}

TEST(CliCurvature, DeltaOfTreeIsZero) {
  ScratchDir dir("curvlink_cli");
  const auto r = run_cli({"curvature", dir.file("tree.edges", tree_edges()), "--delta"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rows(r.out).at("delta"), "0");
}

TEST(CliCurvature, MissingFileExitsTwo) {
  const auto r = run_cli({"curvature", "/nonexistent/curvlink/graph.edges"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot open"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(CliCurvature, IsDeterministic) {
  ScratchDir dir("curvlink_cli");
  const auto path = dir.file("tree.edges", tree_edges());
  const auto a = run_cli({"curvature", path, "--ricci-samples", "5", "--seed", "3"});
  const auto b = run_cli({"curvature", path, "--ricci-samples", "5", "--seed", "3"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(CliParse, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"curvature"}).code, 2);
  EXPECT_EQ(run_cli({"curvature", "x.edges", "--lr", "fast"}).code, 2);
  EXPECT_EQ(run_cli({"curvature", "x.edges", "--no-such-flag"}).code, 2);
}

TEST(CliParse, HelpExitsZero) {
  const auto r = run_cli({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--batch-size"), std::string::npos);
}

TEST(CliParse, UnknownConfigKeyIsRejected) {
  ScratchDir dir("curvlink_cli");
  const auto cfg = dir.file("run.cfg", "lr = 0.01\nlearning_rate = 0.1\n");
  const auto r = run_cli({"curvature", dir.file("tree.edges", tree_edges()), "--config", cfg});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
  EXPECT_NE(r.err.find(":2:"), std::string::npos);
}

TEST(CliParse, InvalidValueIsRejected) {
  ScratchDir dir("curvlink_cli");
  const auto r = run_cli({"curvature", dir.file("tree.edges", tree_edges()), "--ricci-alpha", "1.5"});
  EXPECT_EQ(r.code, 2);
}

TEST(CliCommunities, BridgedTrianglesKeepLabels) {
  ScratchDir dir("curvlink_cli");
  const auto path = dir.file("g.edges", "10 11\n11 12\n10 12\n20 21\n21 22\n20 22\n12 20\n");
  const auto r = run_cli({"communities", path});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = rows(r.out);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at("10"), t.at("11"));
  EXPECT_EQ(t.at("10"), t.at("12"));
  EXPECT_EQ(t.at("20"), t.at("21"));
  EXPECT_EQ(t.at("20"), t.at("22"));
  EXPECT_NE(t.at("10"), t.at("20"));
}

TEST_F(CliData, SynthWritesLayerFiles) {
  for (const char* f : {"source.edges", "target.edges", "source.blocks", "target.blocks",
                        "source.features", "target.features", "anchors.tsv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path(std::string("data/") + f))) << f;
  }
  const Layer s = load_edge_list(dir.path("data/source.edges"));
  EXPECT_EQ(s.node_count(), 40u);
  EXPECT_EQ(load_features(dir.path("data/source.features")).cols(), 8);
}

TEST_F(CliData, TrainIsByteIdentical) {
  const auto a = run_cli(train_args(dir.path("a")));
  const auto b = run_cli(train_args(dir.path("b")));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"history.tsv", "checkpoint.bin", "source.test.edges", "anchors.test"}) {
    const auto fa = slurp(dir.path(std::string("a/") + f));
    EXPECT_FALSE(fa.empty()) << f;
    EXPECT_EQ(fa, slurp(dir.path(std::string("b/") + f))) << f;
  }
}

TEST_F(CliData, TrainEchoesConfigAndWritesHistory) {
  const auto r = run_cli(train_args(dir.path("run")));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("lr = 0.001\n"), std::string::npos);
  EXPECT_NE(r.out.find("epochs = 3\n"), std::string::npos);
  EXPECT_EQ(slurp(dir.path("run/config.txt")).find("alpha_q = 10\n") != std::string::npos, true);

  const auto t = table(dir.path("run/history.tsv"));
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0][0], "epoch");
  EXPECT_EQ(t[0].back(), "total");
  for (std::size_t i = 1; i < t.size(); ++i) {
    ASSERT_EQ(t[i].size(), t[0].size());
    EXPECT_EQ(t[i][0], std::to_string(i));
    EXPECT_TRUE(std::isfinite(std::stod(t[i].back())));
  }

  const Checkpoint c = load_checkpoint(dir.path("run/checkpoint.bin"));
  EXPECT_NE(c.config.find("epochs = 3"), std::string::npos);
  EXPECT_EQ(c.require("source.embedding").rows(), 40);
}

TEST_F(CliData, ConfigFileIsOverriddenByFlags) {
  const auto cfg = dir.file("run.cfg", "# short run\nepochs = 7\nalternations = 1 # one pass\n");
  auto args = train_args(dir.path("run"));
  args.insert(args.end(), {"--config", cfg, "--epochs", "2"});
  const auto r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(table(dir.path("run/history.tsv")).size(), 3u);
}

TEST_F(CliData, ZeroAlternationsStoresInitialParameters) {
  auto args = train_args(dir.path("run"));
  args.insert(args.end(), {"--alternations", "0"});
  const auto r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(table(dir.path("run/history.tsv")).size(), 1u);

  RunConfig cfg;
  for (std::size_t i = 0; i + 1 < kSmall.size(); i += 2) {
    std::string key = kSmall[i].substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    cfg.set(key, kSmall[i + 1]);
  }
  const Checkpoint c = load_checkpoint(dir.path("run/checkpoint.bin"));
  Layer s = load_edge_list(dir.path("run/source.train.edges"), "source");
  Layer t = load_edge_list(dir.path("run/target.train.edges"), "target");
  s.set_features(load_features(dir.path("data/source.features")));
  t.set_features(load_features(dir.path("data/target.features")));
  const auto anchors = load_anchors(dir.path("run/anchors.train"), s, t);
  const Encoder enc(s, t, anchors, c.kappa[0], c.kappa[1], cfg.encoder);
  const EncoderParams init = enc.init_params(cfg.experiment().train.seed);
  const EncoderParams stored = checkpoint_params(c);
  init.for_each([&](const std::string& name, const Matrix& m, TensorKind, int) {
    EXPECT_EQ(m, c.require(name)) << name;
  });
  const auto emb = enc.forward(stored, Mode::eval);
  EXPECT_EQ(emb[0], c.require("source.embedding"));
  EXPECT_EQ(emb[1], c.require("target.embedding"));
}

TEST_F(CliData, ZeroAnchorsWarnsAndHasNoAlignmentLoss) {
  const auto r = run_cli(train_args(dir.path("run"), dir.file("none.tsv", "# no anchors\n")));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto t = table(dir.path("run/history.tsv"));
  const auto col = static_cast<std::size_t>(
      std::find(t[0].begin(), t[0].end(), "L_er") - t[0].begin());
  ASSERT_LT(col, t[0].size());
  ASSERT_GT(t.size(), 1u);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_EQ(t[i][col], "0");
}

TEST_F(CliData, EvaluationCommands) {
  ASSERT_EQ(run_cli(train_args(dir.path("run"))).code, 0);
  const std::string ckpt = dir.path("run/checkpoint.bin");
  const std::string split = dir.path("run");

  const auto intra = run_cli({"eval-intra", "--checkpoint", ckpt, "--split-dir", split});
  ASSERT_EQ(intra.code, 0) << intra.err;
  const auto mi = rows(intra.out);
  for (const char* key : {"source.auc", "target.auc", "source.f1", "target.f1"}) {
    const double v = std::stod(mi.at(key));
    EXPECT_GE(v, 0.0) << key;
    EXPECT_LE(v, 1.0) << key;
  }
  const auto val = run_cli({"eval-intra", "--checkpoint", ckpt, "--split-dir", split, "--split", "val"});
  EXPECT_EQ(val.code, 0) << val.err;

  const auto k1 = run_cli({"eval-inter", "--checkpoint", ckpt, "--split-dir", split, "-k", "1"});
  const auto k40 = run_cli({"eval-inter", "--checkpoint", ckpt, "--split-dir", split, "--k", "40"});
  ASSERT_EQ(k1.code, 0) << k1.err;
  ASSERT_EQ(k40.code, 0) << k40.err;
  const auto m1 = rows(k1.out), m40 = rows(k40.out);
  ASSERT_TRUE(m1.count("hit@1") && m1.count("mrr@1"));
  ASSERT_TRUE(m40.count("hit@40") && m40.count("mrr@40"));
  // Every target node is a candidate, so a cutoff at the layer size hits every anchor.
  EXPECT_EQ(m40.at("hit@40"), "1");
  EXPECT_LE(std::stod(m1.at("hit@1")), std::stod(m40.at("hit@40")));
  EXPECT_EQ(std::stod(m1.at("hit@1")), std::stod(m1.at("mrr@1")));

  const auto dump = dir.path("ranks.tsv");
  ASSERT_EQ(run_cli({"eval-inter", "--checkpoint", ckpt, "--split-dir", split, "--dump", dump}).code, 0);
  const auto d = table(dump);
  EXPECT_EQ(d.size(), 1u + std::stoul(rows(k1.out).at("anchors")));
}

TEST_F(CliData, CorruptCheckpointExitsThree) {
  ASSERT_EQ(run_cli(train_args(dir.path("run"))).code, 0);
  std::string bytes = slurp(dir.path("run/checkpoint.bin"));
  bytes[0] = 'X';
  std::ofstream(dir.path("bad.bin"), std::ios::binary) << bytes;
  const auto r = run_cli({"eval-intra", "--checkpoint", dir.path("bad.bin"), "--split-dir", dir.path("run")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("magic"), std::string::npos);

  std::ofstream(dir.path("short.bin"), std::ios::binary)
      << slurp(dir.path("run/checkpoint.bin")).substr(0, 100);
  EXPECT_EQ(run_cli({"eval-inter", "--checkpoint", dir.path("short.bin"), "--split-dir", dir.path("run")}).code, 3);
}

TEST_F(CliData, CommunitiesFromCheckpoint) {
  ASSERT_EQ(run_cli(train_args(dir.path("run"))).code, 0);
  const auto r = run_cli({"communities", dir.path("data/target.edges"), "--checkpoint",
                          dir.path("run/checkpoint.bin"), "--network", "target"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rows(r.out).size(), 40u);
  EXPECT_EQ(run_cli({"communities", dir.path("data/target.edges"), "--checkpoint",
                     dir.path("run/checkpoint.bin"), "--network", "middle"})
                .code,
            2);
}

TEST(CliGolden, OutputsMatchPinnedFiles) {
  const std::string g = CURVLINK_GOLDEN_DIR;
  const auto curv = run_cli({"curvature", g + "/tree15.edges", "--ricci-alpha", "0", "--delta"});
  ASSERT_EQ(curv.code, 0) << curv.err;
  EXPECT_EQ(curv.out, slurp(g + "/tree15.curvature.tsv"));
  const auto comm = run_cli({"communities", g + "/triangles.edges"});
  ASSERT_EQ(comm.code, 0) << comm.err;
  EXPECT_EQ(comm.out, slurp(g + "/triangles.communities.tsv"));
}
