// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2s/graph/featurize.hpp"

namespace g2s::graph {

class SingleExampleTooLarge : public std::runtime_error {
 public:
  SingleExampleTooLarge(std::size_t index, int tokens, int max_tokens)
      : std::runtime_error("example " + std::to_string(index) + " has " + std::to_string(tokens) +
                           " tokens, more than max_tokens=" + std::to_string(max_tokens)) {}
};

/// Groups examples of similar token count so that (largest count in batch) x
/// (batch size) <= max_tokens. Batch order is shuffled when rng is given.
template <class Rng = std::mt19937_64>
std::vector<std::vector<std::size_t>> make_batches(std::span<const int> token_counts, int max_tokens,
                                                   Rng* rng = nullptr) {
  for (std::size_t i = 0; i < token_counts.size(); ++i)
    if (token_counts[i] > max_tokens) throw SingleExampleTooLarge(i, token_counts[i], max_tokens);
  std::vector<std::size_t> order(token_counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return token_counts[a] < token_counts[b]; });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  int cur_max = 0;
  for (std::size_t idx : order) {
    const int t = std::max(token_counts[idx], 1);
    const int new_max = std::max(cur_max, t);
    if (!cur.empty() && static_cast<long>(new_max) * static_cast<long>(cur.size() + 1) > max_tokens) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_max = 0;
    }
    cur.push_back(idx);
    cur_max = std::max(cur_max, t);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  if (rng) std::shuffle(batches.begin(), batches.end(), *rng);
  return batches;
}

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

/// Several graphs packed end to end, with their padded target sequences.
/// Atoms of different graphs never interact; `atom_graph` records membership.
struct Batch {
  int num_graphs = 0;
  std::vector<int> atom_offset{0};  // num_graphs + 1
  std::vector<int> edge_offset{0};
  std::vector<int> atom_graph;
  std::vector<float> atom_feats;
  std::vector<float> bond_feats;
  std::vector<int> edge_src;  // packed atom indices
  std::vector<int> edge_dst;
  Csr incoming;  // packed edge indices
  Csr incoming_all;
  std::vector<std::vector<int>> buckets;  // per graph, local n x n

  int max_target_len = 0;
  std::vector<int> target_ids;   // num_graphs x max_target_len, PAD-filled
  std::vector<std::uint8_t> target_mask;
  std::vector<int> target_len;

  int num_atoms() const { return atom_offset.back(); }
  int num_edges() const { return edge_offset.back(); }
  int graph_atoms(int b) const {
    return atom_offset[static_cast<std::size_t>(b) + 1] - atom_offset[static_cast<std::size_t>(b)];
  }
  int target_tokens() const {
    int s = 0;
    for (int l : target_len) s += l;
    return s;
  }
};

inline void append_graph(Batch& batch, const FeaturizedGraph& g) {
  const int atom_base = batch.num_atoms();
  const int edge_base = batch.num_edges();
  batch.atom_feats.insert(batch.atom_feats.end(), g.atom_feats.begin(), g.atom_feats.end());
  batch.bond_feats.insert(batch.bond_feats.end(), g.bond_feats.begin(), g.bond_feats.end());
  for (int e = 0; e < g.num_edges; ++e) {
    batch.edge_src.push_back(g.edge_src[static_cast<std::size_t>(e)] + atom_base);
    batch.edge_dst.push_back(g.edge_dst[static_cast<std::size_t>(e)] + atom_base);
  }
  std::vector<int> shifted;
  for (int e = 0; e < g.num_edges; ++e) {
    shifted.clear();
    for (int x : g.incoming[e]) shifted.push_back(x + edge_base);
    batch.incoming.push_list(shifted);
  }
  for (int u = 0; u < g.num_atoms; ++u) {
    shifted.clear();
    for (int x : g.incoming_all[u]) shifted.push_back(x + edge_base);
    batch.incoming_all.push_list(shifted);
    batch.atom_graph.push_back(batch.num_graphs);
  }
  batch.buckets.push_back(g.buckets);
  batch.atom_offset.push_back(atom_base + g.num_atoms);
  batch.edge_offset.push_back(edge_base + g.num_edges);
  ++batch.num_graphs;
}

/// Packs graphs and (optional) target id sequences. Targets should end in EOS.
inline Batch collate(std::span<const FeaturizedGraph* const> graphs,
                     std::span<const std::vector<int>* const> targets = {}) {
  Batch batch;
  for (const auto* g : graphs) append_graph(batch, *g);
  if (!targets.empty()) {
    if (targets.size() != graphs.size()) throw std::invalid_argument("collate: target count mismatch");
    for (const auto* t : targets) batch.max_target_len = std::max(batch.max_target_len, static_cast<int>(t->size()));
    const auto width = static_cast<std::size_t>(batch.max_target_len);
    batch.target_ids.assign(graphs.size() * width, kPad);
    batch.target_mask.assign(graphs.size() * width, 0);
    for (std::size_t b = 0; b < targets.size(); ++b) {
      const auto& t = *targets[b];
      std::copy(t.begin(), t.end(), batch.target_ids.begin() + static_cast<long>(b * width));
      for (std::size_t i = 0; i < t.size(); ++i) batch.target_mask[b * width + i] = t[i] != kPad ? 1 : 0;
      int len = 0;
      for (int id : t)
        if (id != kPad) ++len;
      batch.target_len.push_back(len);
    }
  }
  return batch;
}

}  // namespace g2s::graph
