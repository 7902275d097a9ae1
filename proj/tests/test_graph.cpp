// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>

#include "g2s/graph/batch.hpp"
#include "g2s/graph/featurize.hpp"
#include "support.hpp"

using namespace g2s;
using graph::kAtomBlocks;
using graph::kAtomFeatureDim;
using graph::kBondBlocks;
using graph::kBondFeatureDim;

namespace {

// Index of the hot slot inside block `k` of atom row `u`.
int hot_slot(const graph::FeaturizedGraph& f, int u, std::size_t k) {
  int base = 0;
  for (std::size_t j = 0; j < k; ++j) base += kAtomBlocks[j];
  const float* row = f.atom_feats.data() + static_cast<std::size_t>(u) * kAtomFeatureDim;
  for (int s = 0; s < kAtomBlocks[k]; ++s)
    if (row[base + s] == 1.0f) return s;
  return -1;
}

}  // namespace

TEST(Featurize, VectorLengths) {
  EXPECT_EQ(kAtomFeatureDim, 65 + 10 + 5 + 7 + 5 + 5 + 3 + 2);
  EXPECT_EQ(kBondFeatureDim, 5 + 3 + 2 + 2);
  const auto f = graph::featurize(chem::parse_smiles("CCO"));
  EXPECT_EQ(f.atom_feats.size(), 3u * 102u);
  EXPECT_EQ(f.bond_feats.size(), 4u * 12u);
}

TEST(Featurize, MethaneCarbonChargeSlot) {
  const auto f = graph::featurize(chem::parse_smiles("C"));
  EXPECT_EQ(hot_slot(f, 0, 2), 2);
  EXPECT_EQ(hot_slot(f, 0, 0), 0);  // symbol C
  EXPECT_EQ(hot_slot(f, 0, 5), 4);  // four hydrogens
}

TEST(Featurize, OneHotPerBlock) {
  for (const auto& s : fixtures::smiles_fixtures()) {
    const auto f = graph::featurize(chem::parse_smiles(s));
    for (int u = 0; u < f.num_atoms; ++u) {
      int base = 0;
      for (int size : kAtomBlocks) {
        float sum = 0;
        for (int k = 0; k < size; ++k)
          sum += f.atom_feats[static_cast<std::size_t>(u) * kAtomFeatureDim + static_cast<std::size_t>(base + k)];
        EXPECT_EQ(sum, 1.0f) << s;
        base += size;
      }
    }
    for (int e = 0; e < f.num_edges; ++e) {
      int base = 0;
      for (int size : kBondBlocks) {
        float sum = 0;
        for (int k = 0; k < size; ++k)
          sum += f.bond_feats[static_cast<std::size_t>(e) * kBondFeatureDim + static_cast<std::size_t>(base + k)];
        EXPECT_EQ(sum, 1.0f) << s;
        base += size;
      }
    }
  }
}

TEST(Featurize, UnknownElementHitsLastSymbolSlot) {
  const auto f = graph::featurize(chem::parse_smiles("[Xe]"));
  EXPECT_EQ(hot_slot(f, 0, 0), 64);
}

TEST(Featurize, ChiralitySlots) {
  const auto f = graph::featurize(chem::parse_smiles("N[C@@H](C)C(=O)O"));
  EXPECT_EQ(hot_slot(f, 1, 6), 1);  // CW
  EXPECT_EQ(hot_slot(f, 0, 6), 2);  // none
  const auto g = graph::featurize(chem::parse_smiles("N[C@H](C)C(=O)O"));
  EXPECT_EQ(hot_slot(g, 1, 6), 0);  // CCW
}

TEST(Featurize, HydrogenCountTwoHasItsOwnSlot) {
  const auto f = graph::featurize(chem::parse_smiles("CCC"));
  EXPECT_EQ(hot_slot(f, 1, 5), 2);
}

TEST(Featurize, HybridizationHeuristic) {
  const auto f = graph::featurize(chem::parse_smiles("C#CC=CC"));
  const int sp = hot_slot(f, 0, 4), sp2 = hot_slot(f, 2, 4), sp3 = hot_slot(f, 4, 4);
  EXPECT_NE(sp, sp2);
  EXPECT_NE(sp2, sp3);
  EXPECT_EQ(hot_slot(f, 1, 4), sp);
  EXPECT_EQ(hot_slot(f, 3, 4), sp2);
}

TEST(Featurize, IncomingListsExcludeReverseBond) {
  for (const auto& s : fixtures::smiles_fixtures()) {
    const auto g = chem::parse_smiles(s);
    const auto f = graph::featurize(g);
    ASSERT_EQ(f.incoming.size(), f.num_edges);
    for (int e = 0; e < f.num_edges; ++e) {
      const int u = f.edge_src[static_cast<std::size_t>(e)];
      const int v = f.edge_dst[static_cast<std::size_t>(e)];
      const auto list = f.incoming[e];
      EXPECT_EQ(static_cast<int>(list.size()), g.degree(u) - 1) << s;
      for (int in : list) {
        EXPECT_EQ(f.edge_dst[static_cast<std::size_t>(in)], u);
        EXPECT_NE(f.edge_src[static_cast<std::size_t>(in)], v);
      }
    }
    ASSERT_EQ(f.incoming_all.size(), f.num_atoms);
    for (int u = 0; u < f.num_atoms; ++u) {
      EXPECT_EQ(static_cast<int>(f.incoming_all[u].size()), g.degree(u));
      for (int in : f.incoming_all[u]) EXPECT_EQ(f.edge_dst[static_cast<std::size_t>(in)], u);
    }
  }
}

TEST(Featurize, BucketsSymmetricWithZeroDiagonal) {
  for (const auto& s : fixtures::smiles_fixtures()) {
    const auto f = graph::featurize(chem::parse_smiles(s));
    const auto n = static_cast<std::size_t>(f.num_atoms);
    for (std::size_t u = 0; u < n; ++u) {
      EXPECT_EQ(f.buckets[u * n + u], 0);
      for (std::size_t v = 0; v < n; ++v) {
        EXPECT_EQ(f.buckets[u * n + v], f.buckets[v * n + u]);
        EXPECT_GE(f.buckets[u * n + v], 0);
        EXPECT_LE(f.buckets[u * n + v], 10);
      }
    }
  }
}

TEST(Featurize, PermutationEquivariance) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    const auto g = fixtures::random_molecule(15, rng);
    const auto perm = fixtures::random_permutation(g.num_atoms(), rng);
    const auto f = graph::featurize(g);
    const auto p = graph::featurize(chem::permute(g, perm));
    const auto n = static_cast<std::size_t>(g.num_atoms());
    for (std::size_t u = 0; u < n; ++u) {
      const auto pu = static_cast<std::size_t>(perm[u]);
      for (std::size_t k = 0; k < static_cast<std::size_t>(kAtomFeatureDim); ++k)
        ASSERT_EQ(f.atom_feats[u * kAtomFeatureDim + k], p.atom_feats[pu * kAtomFeatureDim + k]);
      for (std::size_t v = 0; v < n; ++v)
        ASSERT_EQ(f.buckets[u * n + v], p.buckets[pu * n + static_cast<std::size_t>(perm[v])]);
    }
  }
}

TEST(ShortestPaths, Chain) {
  const auto d = graph::shortest_paths(chem::parse_smiles("CCCC"));
  EXPECT_EQ(d[0 * 4 + 3], 3);
}

TEST(ShortestPaths, Disconnected) {
  const auto d = graph::shortest_paths(chem::parse_smiles("C.C"));
  EXPECT_EQ(d[1], graph::kDistanceInf);
}

TEST(ShortestPaths, Benzene) {
  const auto g = chem::parse_smiles("c1ccccc1");
  const auto d = graph::shortest_paths(g);
  EXPECT_EQ(d[0 * 6 + 3], 3);
  EXPECT_EQ(d, fixtures::floyd_warshall(g));
}

TEST(ShortestPaths, MatchesFloydWarshall) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 200; ++i) {
    const int n = std::uniform_int_distribution<int>(1, 30)(rng);
    const double p = std::uniform_real_distribution<double>(0.02, 0.3)(rng);
    const auto g = fixtures::random_topology(n, p, rng);
    ASSERT_EQ(graph::shortest_paths(g), fixtures::floyd_warshall(g));
  }
}

TEST(Bucketize, Examples) {
  EXPECT_EQ(graph::bucketize(5, true), 5);
  EXPECT_EQ(graph::bucketize(14, true), 8);
  EXPECT_EQ(graph::bucketize(15, true), 9);
  EXPECT_EQ(graph::bucketize(graph::kDistanceInf, false), 10);
}

TEST(Bucketize, ExhaustiveTable) {
  std::vector<int> ds(21);
  std::iota(ds.begin(), ds.end(), 0);
  ds.push_back(graph::kDistanceInf);
  for (int d : ds)
    for (bool same : {true, false}) {
      int want;
      if (!same) want = 10;
      else if (d < 8) want = d;
      else if (d < 15) want = 8;
      else want = 9;
      EXPECT_EQ(graph::bucketize(d, same), want) << d << " " << same;
    }
}

TEST(Buckets, DifferentMoleculesUseBucketTen) {
  const auto f = graph::featurize(chem::parse_smiles("CC.O"));
  EXPECT_EQ(f.buckets[0 * 3 + 1], 1);
  EXPECT_EQ(f.buckets[0 * 3 + 2], 10);
}

TEST(MakeBatches, FixedSizeExamples) {
  const std::vector<int> counts(200, 64);
  const auto batches = graph::make_batches(counts, 4096);
  std::size_t total = 0;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 64u);
    total += b.size();
  }
  EXPECT_EQ(total, 200u);
}

TEST(MakeBatches, TooLargeExampleThrows) {
  const std::vector<int> counts{10, 5000};
  EXPECT_THROW(graph::make_batches(counts, 4096), graph::SingleExampleTooLarge);
}

TEST(MakeBatches, EmptyInput) { EXPECT_TRUE(graph::make_batches(std::vector<int>{}, 4096).empty()); }

TEST(MakeBatches, BudgetHoldsAndEveryExampleOnce) {
  std::mt19937_64 rng(23);
  std::vector<int> counts;
  for (int i = 0; i < 500; ++i) counts.push_back(std::uniform_int_distribution<int>(1, 120)(rng));
  const auto batches = graph::make_batches(counts, 1000, &rng);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    int mx = 0;
    for (auto i : b) {
      mx = std::max(mx, counts[i]);
      EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_LE(static_cast<long>(mx) * static_cast<long>(b.size()), 1000);
  }
  EXPECT_EQ(seen.size(), counts.size());
}

TEST(MakeBatches, SeededShuffleIsReproducible) {
  std::vector<int> counts;
  for (int i = 0; i < 100; ++i) counts.push_back(1 + i % 37);
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(graph::make_batches(counts, 200, &a), graph::make_batches(counts, 200, &b));
}

TEST(Collate, PacksGraphsAndPadsTargets) {
  const auto f1 = graph::featurize(chem::parse_smiles("CCO"));
  const auto f2 = graph::featurize(chem::parse_smiles("C.N"));
  const std::vector<int> t1{5, 6, graph::kEos}, t2{7, graph::kEos};
  const std::vector<const graph::FeaturizedGraph*> gs{&f1, &f2};
  const std::vector<const std::vector<int>*> ts{&t1, &t2};
  const auto b = graph::collate(gs, ts);
  EXPECT_EQ(b.num_graphs, 2);
  EXPECT_EQ(b.num_atoms(), 5);
  EXPECT_EQ(b.atom_offset, (std::vector<int>{0, 3, 5}));
  EXPECT_EQ(b.num_edges(), 4);
  EXPECT_EQ(b.max_target_len, 3);
  EXPECT_EQ(b.target_ids, (std::vector<int>{5, 6, graph::kEos, 7, graph::kEos, graph::kPad}));
  EXPECT_EQ(b.target_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0}));
  EXPECT_EQ(b.target_tokens(), 5);
  ASSERT_EQ(b.buckets.size(), 2u);
  EXPECT_EQ(b.buckets[1][1], 10);
  for (int e = 0; e < b.num_edges(); ++e) EXPECT_LT(b.edge_src[static_cast<std::size_t>(e)], 3);
}
