// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "g2s/app/dataset.hpp"
#include "g2s/infer/beam_search.hpp"
#include "g2s/model/graph2smiles.hpp"
#include "g2s/model/vocab.hpp"

namespace g2s::infer {

/// Encodes examples in chunks and hands each graph's memory rows to `fn`.
template <class T, class Fn>
void for_each_memory(const model::Graph2Smiles<T>& m, const std::vector<app::Example>& xs, Fn&& fn,
                     std::size_t chunk = 32) {
  nn::NoGradGuard ng;
  std::mt19937_64 rng(0);
  for (std::size_t start = 0; start < xs.size(); start += chunk) {
    std::vector<const graph::FeaturizedGraph*> gs;
    for (std::size_t i = start; i < std::min(xs.size(), start + chunk); ++i) gs.push_back(&xs[i].graph);
    const auto batch = graph::collate(gs);
    const auto memory = m.encode(batch, rng, false);
    for (int g = 0; g < batch.num_graphs; ++g) {
      const auto b = static_cast<std::size_t>(batch.atom_offset[static_cast<std::size_t>(g)]);
      const auto e = static_cast<std::size_t>(batch.atom_offset[static_cast<std::size_t>(g) + 1]);
      fn(start + static_cast<std::size_t>(g), nn::slice_rows(memory, b, e));
    }
  }
}

template <class T>
std::vector<Hypothesis> greedy_hypotheses(const model::Graph2Smiles<T>& m, const std::vector<app::Example>& xs,
                                          int max_len) {
  std::vector<Hypothesis> out(xs.size());
  for_each_memory(m, xs, [&](std::size_t i, const nn::Tensor<T>& mem) {
    out[i] = greedy_decode(m.decoder(), mem, max_len);
  });
  return out;
}

template <class T>
std::vector<std::string> greedy_predictions(const model::Graph2Smiles<T>& m, const std::vector<app::Example>& xs,
                                            const model::Vocab& vocab, int max_len) {
  std::vector<std::string> out;
  for (const auto& h : greedy_hypotheses(m, xs, max_len)) out.push_back(vocab.decode(h.tokens));
  return out;
}

/// Beam-search candidates per example, deduplicated and validity-filtered.
template <class T>
std::vector<std::vector<Candidate>> beam_predictions(const model::Graph2Smiles<T>& m,
                                                     const std::vector<app::Example>& xs, const model::Vocab& vocab,
                                                     int beam_size, int max_len) {
  std::vector<std::vector<Candidate>> out(xs.size());
  for_each_memory(m, xs, [&](std::size_t i, const nn::Tensor<T>& mem) {
    out[i] = filter_valid(to_candidates(beam_search(m.decoder(), mem, beam_size, max_len), vocab));
  });
  return out;
}

/// Fraction of examples whose single prediction matches the target.
inline double top1_accuracy(const std::vector<std::string>& preds, const std::vector<app::Example>& xs) {
  std::vector<std::vector<std::string>> p;
  std::vector<std::string> truths;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    p.push_back(filter_valid(std::vector<std::string>{preds[i]}));
    truths.push_back(xs[i].target);
  }
  return topn_accuracy(p, truths, {1}).front();
}

inline std::vector<double> beam_accuracy(const std::vector<std::vector<Candidate>>& preds,
                                         const std::vector<app::Example>& xs, const std::vector<int>& n_values) {
  std::vector<std::vector<std::string>> p;
  std::vector<std::string> truths;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<std::string> row;
    for (const auto& c : preds[i]) row.push_back(c.smiles);
    p.push_back(std::move(row));
    truths.push_back(xs[i].target);
  }
  return topn_accuracy(p, truths, n_values);
}

}  // namespace g2s::infer
