// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "g2s/graph/batch.hpp"
#include "g2s/model/graph2smiles.hpp"
#include "support.hpp"

using namespace g2s;

namespace {

model::ModelConfig small_config(model::LocalVariant variant = model::LocalVariant::DGAT) {
  model::ModelConfig c;
  c.vocab_size = 12;
  c.d_model = 16;
  c.heads = 4;
  c.ffn = 32;
  c.local_variant = variant;
  c.local_steps = 3;
  c.global_layers = 2;
  c.decoder_layers = 1;
  c.dropout = 0.0;
  c.label_smoothing = 0.0;
  return c;
}

graph::Batch batch_of(const std::vector<chem::MolGraph>& gs) {
  std::vector<graph::FeaturizedGraph> fs;
  for (const auto& g : gs) fs.push_back(graph::featurize(g));
  std::vector<const graph::FeaturizedGraph*> ptrs;
  for (const auto& f : fs) ptrs.push_back(&f);
  return graph::collate(ptrs);
}

graph::Batch batch_of(const std::string& smiles) { return batch_of({chem::parse_smiles(smiles)}); }

template <class T>
nn::Tensor<T> local_forward(const model::Graph2Smiles<T>& m, const graph::Batch& b) {
  std::mt19937_64 rng(0);
  return m.local().forward(model::graph_tensors<T>(b), rng, false);
}

template <class T>
void set_param(model::Graph2Smiles<T>& m, const std::string& name, T value) {
  auto t = m.params().get(name);
  for (auto& x : t.values()) x = value;
}

// Row u of `a` against row perm[u] of `b`.
template <class T>
double max_permuted_diff(const nn::Tensor<T>& a, const nn::Tensor<T>& b, const std::vector<int>& perm) {
  double worst = 0;
  for (std::size_t u = 0; u < a.rows(); ++u)
    for (std::size_t c = 0; c < a.cols(); ++c)
      worst = std::max(worst, std::abs(static_cast<double>(a(u, c)) -
                                       static_cast<double>(b(static_cast<std::size_t>(perm[u]), c))));
  return worst;
}

}  // namespace

TEST(LocalEncoder, SingleIncomingBondGetsWeightOne) {
  model::Graph2Smiles<double> m(small_config(), 1);
  const auto b = batch_of("CC");
  for (double w : m.local().readout_weights(model::graph_tensors<double>(b))) EXPECT_EQ(w, 1.0);
}

TEST(LocalEncoder, IdenticalIncomingMessagesSplitEvenly) {
  model::Graph2Smiles<double> m(small_config(), 2);
  const auto b = batch_of("CCC");
  const auto w = m.local().readout_weights(model::graph_tensors<double>(b));
  const auto heads = static_cast<std::size_t>(m.config().heads);
  const auto& lists = b.incoming_all;
  const auto base = static_cast<std::size_t>(lists.offsets[1]);
  ASSERT_EQ(lists[1].size(), 2u);
  for (std::size_t h = 0; h < heads; ++h) {
    EXPECT_EQ(w[base * heads + h], 0.5);
    EXPECT_EQ(w[(base + 1) * heads + h], 0.5);
  }
}

TEST(LocalEncoder, ReadoutWeightsSumToOnePerHead) {
  model::Graph2Smiles<double> m(small_config(), 3);
  std::mt19937_64 rng(3);
  const auto heads = static_cast<std::size_t>(m.config().heads);
  for (int i = 0; i < 20; ++i) {
    const auto b = batch_of({fixtures::random_molecule(12, rng)});
    const auto w = m.local().readout_weights(model::graph_tensors<double>(b));
    for (int u = 0; u < b.incoming_all.size(); ++u) {
      const auto base = static_cast<std::size_t>(b.incoming_all.offsets[static_cast<std::size_t>(u)]);
      const auto n = b.incoming_all[u].size();
      if (n == 0) continue;
      for (std::size_t h = 0; h < heads; ++h) {
        double sum = 0;
        for (std::size_t j = 0; j < n; ++j) sum += w[(base + j) * heads + h];
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
}

TEST(LocalEncoder, IsolatedAtomReadsOutItsOwnFeatures) {
  model::Graph2Smiles<double> m(small_config(), 4);
  const auto b = batch_of("C");
  const auto h = local_forward(m, b);
  ASSERT_EQ(h.rows(), 1u);
  const auto& w_o = m.params().get("local.W_o");
  for (std::size_t c = 0; c < h.cols(); ++c) {
    double pre = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(graph::kAtomFeatureDim); ++k) pre += b.atom_feats[k] * w_o(k, c);
    const double gelu = 0.5 * pre * (1.0 + std::erf(pre / std::sqrt(2.0)));
    EXPECT_NEAR(h(0, c), gelu, 1e-6);
  }
}

TEST(LocalEncoder, ShapeForEthanol) {
  model::Graph2Smiles<float> m(small_config(), 5);
  const auto h = local_forward(m, batch_of("CCO"));
  EXPECT_EQ(h.rows(), 3u);
  EXPECT_EQ(h.cols(), 16u);
}

TEST(LocalEncoder, ZeroStepsRejected) {
  auto c = small_config();
  c.local_steps = 0;
  EXPECT_THROW(model::Graph2Smiles<float>(c, 0), model::ConfigError);
}

// One step with every update gate saturated at 1 and reset gate at 0 leaves
// the candidate message tanh(W [x_u; x_uv] + b).
TEST(LocalEncoder, UpdateGateOneGivesCandidate) {
  auto cfg = small_config();
  cfg.local_steps = 1;
  model::Graph2Smiles<double> m(cfg, 6);
  set_param(m, "local.b_z", 60.0);
  set_param(m, "local.b_r", -60.0);
  const auto b = batch_of("CC(=O)N");
  const auto g = model::graph_tensors<double>(b);
  std::mt19937_64 rng(0);
  const auto msg = m.local().messages(g, rng, false);
  const auto want = nn::tanh(nn::linear(g.edge_input, m.params().get("local.W"), m.params().get("local.b")));
  for (std::size_t i = 0; i < msg.size(); ++i) EXPECT_NEAR(msg.values()[i], want.values()[i], 1e-12);
}

template <class T>
nn::Tensor<T> first_aggregate(const model::Graph2Smiles<T>& m, const model::GraphTensors<T>& g) {
  const auto m0 = nn::tanh(nn::linear(g.edge_input, m.params().get("local.W_init"), m.params().get("local.b_init")));
  const auto& agg = m.local().message_aggregation();
  return agg(agg.context(g.edge_input), m0, *g.incoming, static_cast<std::size_t>(m.config().heads));
}

TEST(LocalEncoder, UpdateGateZeroGivesAggregate) {
  auto cfg = small_config();
  cfg.local_steps = 1;
  model::Graph2Smiles<double> m(cfg, 7);
  set_param(m, "local.b_z", -60.0);
  const auto b = batch_of("CC(=O)N");
  const auto g = model::graph_tensors<double>(b);
  std::mt19937_64 rng(0);
  const auto msg = m.local().messages(g, rng, false);
  const auto s = first_aggregate(m, g);
  for (std::size_t i = 0; i < msg.size(); ++i) EXPECT_NEAR(msg.values()[i], s.values()[i], 1e-12);
}

TEST(LocalEncoder, MessagesBoundedByAggregateOrOne) {
  auto cfg = small_config();
  cfg.local_steps = 1;
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    model::Graph2Smiles<double> m(cfg, seed);
    const auto b = batch_of({fixtures::random_molecule(15, rng)});
    const auto g = model::graph_tensors<double>(b);
    std::mt19937_64 drng(0);
    const auto msg = m.local().messages(g, drng, false);
    const auto s = first_aggregate(m, g);
    for (std::size_t i = 0; i < msg.size(); ++i)
      EXPECT_LE(std::abs(msg.values()[i]), std::max(std::abs(s.values()[i]), 1.0) + 1e-15);
  }
}

TEST(LocalEncoder, PermutationInvariance) {
  for (auto variant : {model::LocalVariant::DGAT, model::LocalVariant::DGCN}) {
    model::Graph2Smiles<float> m(small_config(variant), 9);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20; ++i) {
      const auto g = fixtures::random_molecule(20, rng);
      const auto h = local_forward(m, batch_of({g}));
      for (int k = 0; k < 5; ++k) {
        const auto perm = fixtures::random_permutation(g.num_atoms(), rng);
        const auto hp = local_forward(m, batch_of({chem::permute(g, perm)}));
        EXPECT_LT(max_permuted_diff(h, hp, perm), 1e-5);
      }
    }
  }
}

namespace {

// A D-GAT model whose score projections are zero, plus a D-GCN model that
// shares every other parameter with it.
struct DegeneratePair {
  model::Graph2Smiles<double> gat{small_config(model::LocalVariant::DGAT), 10};
  model::Graph2Smiles<double> gcn{small_config(model::LocalVariant::DGCN), 11};

  DegeneratePair() {
    for (auto& p : gcn.params().all()) {
      const auto& src = gat.params().get(p.name);
      p.tensor.values() = src.values();
    }
    for (const std::string prefix : {"local.attn", "local.readout"}) {
      set_param(gat, prefix + ".W_qk_ctx", 0.0);
      set_param(gat, prefix + ".W_qk_msg", 0.0);
      set_param(gat, prefix + ".b_qk", 0.0);
    }
  }
};

}  // namespace

TEST(LocalEncoder, DegenerateAttentionMatchesSumWhenListsAreSingletons) {
  DegeneratePair pair;
  for (const std::string s : {"CC", "C=O", "C#N", "CC.O", "O"}) {
    const auto b = batch_of(s);
    const auto a = local_forward(pair.gat, b);
    const auto c = local_forward(pair.gcn, b);
    EXPECT_EQ(a.values(), c.values()) << s;
  }
}

TEST(LocalEncoder, DegenerateAttentionIsTheMeanOfTheSum) {
  DegeneratePair pair;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const auto b = batch_of({fixtures::random_molecule(12, rng)});
    const auto g = model::graph_tensors<double>(b);
    const auto a = first_aggregate(pair.gat, g);
    const auto c = first_aggregate(pair.gcn, g);
    for (int e = 0; e < b.incoming.size(); ++e) {
      const auto n = b.incoming[e].size();
      for (std::size_t col = 0; col < a.cols(); ++col) {
        const auto r = static_cast<std::size_t>(e);
        if (n == 0) EXPECT_EQ(a(r, col), 0.0);
        else EXPECT_NEAR(a(r, col) * static_cast<double>(n), c(r, col), 1e-12);
      }
    }
  }
}

TEST(GlobalEncoder, ZeroInputGivesUniformAttention) {
  model::Graph2Smiles<double> m(small_config(), 13);
  const auto b = batch_of("CC(C)CO");
  const nn::Tensor<double> x(5, 16, 0.0);
  std::vector<double> w;
  m.global().attention(m.global().layers().front(), x, model::atom_layout(b), &w);
  ASSERT_EQ(w.size(), 5u * 5u * 4u);
  for (double v : w) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(GlobalEncoder, AttentionStaysInsideEachReaction) {
  model::Graph2Smiles<double> m(small_config(), 14);
  const auto b = batch_of({chem::parse_smiles("CCO"), chem::parse_smiles("CN.O")});
  const auto h = local_forward(m, b);
  std::vector<double> w;
  const auto lay = model::atom_layout(b);
  m.global().attention(m.global().layers().front(), h, lay, &w);
  // 3x3 pairs for the first graph, 3x3 for the second, each row a distribution
  ASSERT_EQ(w.size(), (9u + 9u) * 4u);
  for (std::size_t q = 0; q < 6; ++q)
    for (std::size_t hd = 0; hd < 4; ++hd) {
      double sum = 0;
      for (std::size_t j = 0; j < 3; ++j) sum += w[(q * 3 + j) * 4 + hd];
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  // the two molecules of the second reaction sit in bucket 10 of each other
  EXPECT_EQ(lay.rel[9 + 0 * 3 + 2], 10);
}

TEST(GlobalEncoder, SingleAtomOutputIsItsValueProjection) {
  model::Graph2Smiles<double> m(small_config(), 15);
  const auto b = batch_of("O");
  nn::Tensor<double> x(1, 16);
  std::mt19937_64 rng(15);
  for (auto& v : x.values()) v = std::normal_distribution<double>()(rng);
  const auto& layer = m.global().layers().front();
  const auto out = m.global().attention(layer, x, model::atom_layout(b));
  const auto want = nn::linear(nn::linear(x, layer.attn.w_v, layer.attn.b_v), layer.attn.w_o, layer.attn.b_o);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out(0, c), want(0, c), 1e-12);
}

TEST(GlobalEncoder, SwappingEquivalentAtomsChangesNothing) {
  model::Graph2Smiles<double> m(small_config(), 16);
  // the two methyl carbons of isobutane are interchangeable
  const auto b = batch_of("CC(C)C");
  std::mt19937_64 rng(0);
  const auto h = local_forward(m, b);
  const auto out = m.global().forward(h, model::atom_layout(b), rng, false);
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_NEAR(out(0, c), out(2, c), 1e-12);
    EXPECT_NEAR(out(0, c), out(3, c), 1e-12);
  }
}

TEST(GlobalEncoder, OutputShape) {
  auto cfg = small_config();
  cfg.d_model = 256;
  cfg.heads = 8;
  cfg.ffn = 2048;
  cfg.global_layers = 6;
  model::Graph2Smiles<float> m(cfg, 17);
  const auto b = batch_of("CCOC(=O)C");
  std::mt19937_64 rng(0);
  const auto out = m.encode(b, rng, false);
  EXPECT_EQ(out.rows(), 6u);
  EXPECT_EQ(out.cols(), 256u);
}

TEST(GlobalEncoder, ZeroLayersScalesBySqrtDModel) {
  auto cfg = small_config();
  cfg.global_layers = 0;
  model::Graph2Smiles<double> m(cfg, 18);
  const auto b = batch_of("CC(=O)O");
  std::mt19937_64 rng(0);
  const auto h = local_forward(m, b);
  const auto out = m.global().forward(h, model::atom_layout(b), rng, true);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(out.values()[i], h.values()[i] * std::sqrt(16.0));
  for (const auto& p : m.params().all()) EXPECT_NE(p.name.rfind("global.", 0), 0u) << p.name;
}

TEST(GlobalEncoder, NoPositionalModeDropsTheBucketTable) {
  auto cfg = small_config();
  cfg.relative_positions = false;
  model::Graph2Smiles<float> m(cfg, 19);
  EXPECT_FALSE(m.params().contains("global.r"));
  EXPECT_FALSE(m.params().contains("global.d"));
  EXPECT_TRUE(m.params().contains("global.c"));
}

TEST(GlobalEncoder, PermutationInvariance) {
  model::Graph2Smiles<float> m(small_config(), 20);
  std::mt19937_64 rng(20);
  for (int i = 0; i < 20; ++i) {
    const auto g = fixtures::random_molecule(20, rng);
    std::mt19937_64 drng(0);
    const auto out = m.encode(batch_of({g}), drng, false);
    for (int k = 0; k < 5; ++k) {
      const auto perm = fixtures::random_permutation(g.num_atoms(), rng);
      const auto outp = m.encode(batch_of({chem::permute(g, perm)}), drng, false);
      EXPECT_LT(max_permuted_diff(out, outp, perm), 1e-5);
    }
  }
}
