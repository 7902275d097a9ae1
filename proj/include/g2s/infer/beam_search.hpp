// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "g2s/chem/smiles_parser.hpp"
#include "g2s/chem/smiles_writer.hpp"
#include "g2s/graph/batch.hpp"
#include "g2s/model/decoder.hpp"
#include "g2s/model/vocab.hpp"
#include "g2s/nn/ops.hpp"

namespace g2s::infer {

/// A partial or complete decode. Tokens exclude BOS; a finished hypothesis
/// ends in EOS.
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
};

/// True when a ranks above b: higher score, then lexicographically smaller
/// token ids.
inline bool ranks_before(double score_a, std::span<const int> a, double score_b, std::span<const int> b) {
  if (score_a != score_b) return score_a > score_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline bool expandable(int token) { return token != graph::kPad && token != graph::kBos; }

/// Argmax decoding; ties go to the lowest token id.
template <class T>
Hypothesis greedy_decode(const model::Decoder<T>& dec, const nn::Tensor<T>& memory, int max_len) {
  auto state = dec.start(memory);
  Hypothesis h;
  int last = graph::kBos;
  const int limit = std::min(max_len, dec.config().max_len);
  const int parent = 0;
  while (static_cast<int>(h.tokens.size()) < limit) {
    const auto logits = dec.step(state, std::span<const int>(&last, 1), std::span<const int>(&parent, 1));
    const std::vector<double> row(logits.values().begin(), logits.values().end());
    const auto logp = nn::log_softmax_rows<double>(row, row.size());
    int best = -1;
    for (int v = 0; v < static_cast<int>(logp.size()); ++v)
      if (expandable(v) && (best < 0 || logp[static_cast<std::size_t>(v)] > logp[static_cast<std::size_t>(best)]))
        best = v;
    h.tokens.push_back(best);
    h.log_prob += logp[static_cast<std::size_t>(best)];
    last = best;
    if (best == graph::kEos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

/// Length-complete beam search over summed log-probabilities.
///
/// Each step scores every continuation of every live hypothesis. The top
/// `beam_size` candidates are examined; those ending in EOS retire to the
/// finished pool. The live set is refilled with the best `beam_size`
/// continuations that do not end in EOS. Decoding stops when nothing is
/// live, at `max_len` tokens, or once the pool holds `beam_size` entries
/// and no live hypothesis can still outrank the last of them. Returns at
/// most `beam_size` finished hypotheses, best first.
template <class T>
std::vector<Hypothesis> beam_search(const model::Decoder<T>& dec, const nn::Tensor<T>& memory, int beam_size,
                                    int max_len) {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be positive");
  auto state = dec.start(memory);
  const int limit = std::min(max_len, dec.config().max_len);
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<int> parents{0};
  std::vector<Hypothesis> pool;
  struct Cand {
    double score;
    int hyp;
    int token;
  };
  std::vector<Cand> cands;
  auto cand_before = [&](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto& ta = live[static_cast<std::size_t>(a.hyp)].tokens;
    const auto& tb = live[static_cast<std::size_t>(b.hyp)].tokens;
    if (a.hyp != b.hyp && ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
    return a.token < b.token;
  };
  auto pool_sort = [&] {
    std::stable_sort(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
      return ranks_before(a.log_prob, a.tokens, b.log_prob, b.tokens);
    });
  };

  for (int len = 0; len < limit && !live.empty(); ++len) {
    std::vector<int> last;
    for (const auto& h : live) last.push_back(h.tokens.empty() ? graph::kBos : h.tokens.back());
    const auto logits = dec.step(state, last, parents);
    const std::size_t vocab = logits.cols();
    const std::vector<double> raw(logits.values().begin(), logits.values().end());
    const auto logp = nn::log_softmax_rows<double>(raw, vocab);
    cands.clear();
    for (std::size_t h = 0; h < live.size(); ++h)
      for (std::size_t v = 0; v < vocab; ++v)
        if (expandable(static_cast<int>(v)))
          cands.push_back({live[h].log_prob + logp[h * vocab + v], static_cast<int>(h), static_cast<int>(v)});
    std::sort(cands.begin(), cands.end(), cand_before);

    std::vector<Hypothesis> next;
    std::vector<int> next_parents;
    const auto k = static_cast<std::size_t>(beam_size);
    for (std::size_t i = 0; i < cands.size() && (i < k || next.size() < k); ++i) {
      const auto& c = cands[i];
      Hypothesis h{live[static_cast<std::size_t>(c.hyp)].tokens, c.score, false};
      h.tokens.push_back(c.token);
      if (c.token == graph::kEos) {
        if (i < k) {
          h.finished = true;
          pool.push_back(std::move(h));
        }
      } else if (next.size() < k) {
        next.push_back(std::move(h));
        next_parents.push_back(c.hyp);
      }
    }
    live = std::move(next);
    parents = std::move(next_parents);
    if (pool.size() >= k && !live.empty()) {
      pool_sort();
      if (live.front().log_prob < pool[k - 1].log_prob) break;
    }
  }
  pool_sort();
  if (pool.size() > static_cast<std::size_t>(beam_size)) pool.resize(static_cast<std::size_t>(beam_size));
  return pool;
}

struct Candidate {
  std::string smiles;
  double score = 0.0;
};

/// Detokenizes hypotheses, keeping the best-scored copy of each string.
inline std::vector<Candidate> to_candidates(const std::vector<Hypothesis>& hyps, const model::Vocab& vocab) {
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (const auto& h : hyps) {
    auto s = vocab.decode(h.tokens);
    if (seen.insert(s).second) out.push_back({std::move(s), h.log_prob});
  }
  return out;
}

/// Keeps candidates that parse, in their original order.
inline std::vector<Candidate> filter_valid(const std::vector<Candidate>& cands) {
  std::vector<Candidate> out;
  for (const auto& c : cands)
    if (chem::is_valid_smiles(c.smiles)) out.push_back(c);
  return out;
}

inline std::vector<std::string> filter_valid(const std::vector<std::string>& cands) {
  std::vector<std::string> out;
  for (const auto& c : cands)
    if (chem::is_valid_smiles(c)) out.push_back(c);
  return out;
}

/// Canonical form, or nullopt when the string does not parse.
inline std::optional<std::string> try_canonicalize(std::string_view smiles) {
  try {
    return chem::canonicalize(smiles);
  } catch (const chem::SmilesError&) {
    return std::nullopt;
  }
}

/// Fraction of examples whose truth is among the first n predictions, for
/// each n. Comparison is on canonical forms.
inline std::vector<double> topn_accuracy(const std::vector<std::vector<std::string>>& predictions,
                                         const std::vector<std::string>& truths, const std::vector<int>& n_values) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("topn_accuracy: prediction/truth count mismatch");
  std::vector<double> hits(n_values.size(), 0.0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto truth = try_canonicalize(truths[i]);
    int rank = -1;
    if (truth) {
      for (std::size_t r = 0; r < predictions[i].size(); ++r) {
        const auto pred = try_canonicalize(predictions[i][r]);
        if (pred && *pred == *truth) {
          rank = static_cast<int>(r);
          break;
        }
      }
    }
    for (std::size_t k = 0; k < n_values.size(); ++k)
      if (rank >= 0 && rank < n_values[k]) hits[k] += 1.0;
  }
  if (!truths.empty())
    for (auto& h : hits) h /= static_cast<double>(truths.size());
  return hits;
}

}  // namespace g2s::infer
