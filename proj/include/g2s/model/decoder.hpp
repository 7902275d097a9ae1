// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2s/graph/batch.hpp"
#include "g2s/model/config.hpp"
#include "g2s/model/encoder_global.hpp"
#include "g2s/nn/attention.hpp"
#include "g2s/nn/ops.hpp"
#include "g2s/nn/params.hpp"

namespace g2s::model {

class PrefixTooLong : public std::length_error {
 public:
  PrefixTooLong(std::size_t len, int max_len)
      : std::length_error("prefix of " + std::to_string(len) + " tokens exceeds max_len " + std::to_string(max_len)) {}
};

template <class T>
struct DecoderLayer {
  AttentionProjections<T> self_attn, cross_attn;
  nn::Tensor<T> rel_k, rel_v;  // (2 * max_rel_pos + 1) x d
  LayerNormParams<T> norm1, norm2, norm3;
  FeedForward<T> ffn;
};

/// Summed token loss and the number of tokens it covers.
template <class T>
struct LossParts {
  nn::Tensor<T> sum;
  std::size_t tokens = 0;
};

/// Autoregressive Transformer decoder with clipped relative positions in
/// self-attention and cross-attention into the atom memory.
template <class T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(nn::ParamStore<T>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    const auto r = static_cast<std::size_t>(2 * cfg.max_rel_pos + 1);
    embed_ = ps.add("decoder.embed", v, d);
    for (int l = 0; l < cfg.decoder_layers; ++l) {
      const std::string p = "decoder.layer" + std::to_string(l);
      DecoderLayer<T> layer;
      layer.self_attn.build(ps, p + ".self", d);
      layer.rel_k = ps.add(p + ".rel_k", r, d);
      layer.rel_v = ps.add(p + ".rel_v", r, d);
      layer.norm1.build(ps, p + ".norm1", d);
      layer.cross_attn.build(ps, p + ".cross", d);
      layer.norm2.build(ps, p + ".norm2", d);
      layer.ffn.build(ps, p + ".ffn", d, static_cast<std::size_t>(cfg.ffn));
      layer.norm3.build(ps, p + ".norm3", d);
      layers_.push_back(layer);
    }
    out_w_ = ps.add("decoder.out.W", d, v);
    out_b_ = ps.add("decoder.out.b", 1, v);
  }

  const ModelConfig& config() const { return cfg_; }

  int rel_index(int query_pos, int key_pos) const {
    return std::clamp(key_pos - query_pos, -cfg_.max_rel_pos, cfg_.max_rel_pos) + cfg_.max_rel_pos;
  }

  /// Teacher-forced logits, one row per (graph, position): row b * L + i
  /// predicts target i of graph b from BOS and targets [0, i).
  template <class Rng>
  nn::Tensor<T> logits(const nn::Tensor<T>& memory, const graph::Batch& b, Rng& rng, bool training) const {
    const int L = b.max_target_len;
    if (L > cfg_.max_len) throw PrefixTooLong(static_cast<std::size_t>(L), cfg_.max_len);
    std::vector<int> inputs;
    inputs.reserve(static_cast<std::size_t>(b.num_graphs * L));
    nn::AttentionLayout self_layout, cross_layout;
    for (int g = 0; g < b.num_graphs; ++g) {
      for (int i = 0; i < L; ++i) {
        inputs.push_back(i == 0 ? graph::kBos : b.target_ids[static_cast<std::size_t>(g * L + i - 1)]);
        self_layout.key_begin.push_back(g * L);
        self_layout.key_end.push_back(g * L + i + 1);
        for (int j = 0; j <= i; ++j) self_layout.rel.push_back(rel_index(i, j));
        cross_layout.key_begin.push_back(b.atom_offset[static_cast<std::size_t>(g)]);
        cross_layout.key_end.push_back(b.atom_offset[static_cast<std::size_t>(g) + 1]);
      }
    }
    const T p = static_cast<T>(cfg_.dropout);
    auto x = nn::dropout(embed_tokens(inputs), p, rng, training);
    for (const auto& layer : layers_) {
      const auto& sa = layer.self_attn;
      const auto& ca = layer.cross_attn;
      x = layer_forward(layer, x, nn::matmul(x, sa.w_k), nn::linear(x, sa.w_v, sa.b_v), self_layout,
                        nn::matmul(memory, ca.w_k), nn::linear(memory, ca.w_v, ca.b_v), cross_layout, rng, training);
    }
    return nn::linear(x, out_w_, out_b_);
  }

  /// Summed (optionally smoothed) cross-entropy over non-PAD target tokens.
  template <class Rng>
  LossParts<T> loss(const nn::Tensor<T>& memory, const graph::Batch& b, Rng& rng, bool training) const {
    auto lg = logits(memory, b, rng, training);
    LossParts<T> out;
    out.sum = nn::cross_entropy_sum(lg, std::span<const int>(b.target_ids), std::span<const std::uint8_t>(b.target_mask),
                                    static_cast<T>(cfg_.label_smoothing), graph::kPad);
    for (auto m : b.target_mask) out.tokens += m;
    return out;
  }

  /// Logits for the token after `prefix` (which starts with BOS), computed
  /// without caching. `memory` holds the atoms of one input graph.
  nn::Tensor<T> next_logits(const nn::Tensor<T>& memory, std::span<const int> prefix) const {
    if (prefix.size() > static_cast<std::size_t>(cfg_.max_len)) throw PrefixTooLong(prefix.size(), cfg_.max_len);
    const int L = static_cast<int>(prefix.size());
    nn::AttentionLayout self_layout, cross_layout;
    for (int i = 0; i < L; ++i) {
      self_layout.key_begin.push_back(0);
      self_layout.key_end.push_back(i + 1);
      for (int j = 0; j <= i; ++j) self_layout.rel.push_back(rel_index(i, j));
      cross_layout.key_begin.push_back(0);
      cross_layout.key_end.push_back(static_cast<int>(memory.rows()));
    }
    std::mt19937_64 rng(0);
    auto x = embed_tokens(prefix);
    for (const auto& layer : layers_) {
      const auto& sa = layer.self_attn;
      const auto& ca = layer.cross_attn;
      x = layer_forward(layer, x, nn::matmul(x, sa.w_k), nn::linear(x, sa.w_v, sa.b_v), self_layout,
                        nn::matmul(memory, ca.w_k), nn::linear(memory, ca.w_v, ca.b_v), cross_layout, rng, false);
    }
    return nn::linear(nn::slice_rows(x, x.rows() - 1, x.rows()), out_w_, out_b_);
  }

  /// Key/value cache of a set of hypotheses decoding against one memory.
  struct State {
    int length = 0;        // tokens consumed per hypothesis
    std::size_t hyps = 0;  // hypotheses in the cache
    std::vector<std::vector<T>> keys, values;  // per layer: hyps x length rows
    std::vector<nn::Tensor<T>> mem_keys, mem_values;
    std::size_t memory_rows = 0;
  };

  State start(const nn::Tensor<T>& memory) const {
    nn::NoGradGuard ng;
    State s;
    s.memory_rows = memory.rows();
    s.keys.resize(layers_.size());
    s.values.resize(layers_.size());
    for (const auto& layer : layers_) {
      s.mem_keys.push_back(nn::matmul(memory, layer.cross_attn.w_k));
      s.mem_values.push_back(nn::linear(memory, layer.cross_attn.w_v, layer.cross_attn.b_v));
    }
    return s;
  }

  /// Feeds one token per hypothesis. Hypothesis h continues cache row
  /// `parents[h]` of the previous step (ignored on the first step). Returns
  /// next-token logits, one row per hypothesis.
  nn::Tensor<T> step(State& s, std::span<const int> tokens, std::span<const int> parents) const {
    nn::NoGradGuard ng;
    const int t = s.length;
    if (t + 1 > cfg_.max_len) throw PrefixTooLong(static_cast<std::size_t>(t + 1), cfg_.max_len);
    const std::size_t n = tokens.size();
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto width = static_cast<std::size_t>(t + 1);
    nn::AttentionLayout self_layout, cross_layout;
    for (std::size_t h = 0; h < n; ++h) {
      self_layout.key_begin.push_back(static_cast<int>(h * width));
      self_layout.key_end.push_back(static_cast<int>((h + 1) * width));
      for (int j = 0; j <= t; ++j) self_layout.rel.push_back(rel_index(t, j));
      cross_layout.key_begin.push_back(0);
      cross_layout.key_end.push_back(static_cast<int>(s.memory_rows));
    }
    std::mt19937_64 rng(0);
    auto x = embed_tokens(tokens);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const auto new_k = nn::matmul(x, layer.self_attn.w_k);
      const auto new_v = nn::linear(x, layer.self_attn.w_v, layer.self_attn.b_v);
      std::vector<T> k(n * width * d), v(n * width * d);
      for (std::size_t h = 0; h < n; ++h) {
        if (t > 0) {
          const auto parent = static_cast<std::size_t>(parents[h]);
          if (parent >= s.hyps) throw std::out_of_range("decoder step: parent index out of range");
          const auto src = parent * static_cast<std::size_t>(t) * d;
          std::copy_n(s.keys[l].begin() + static_cast<long>(src), static_cast<std::size_t>(t) * d,
                      k.begin() + static_cast<long>(h * width * d));
          std::copy_n(s.values[l].begin() + static_cast<long>(src), static_cast<std::size_t>(t) * d,
                      v.begin() + static_cast<long>(h * width * d));
        }
        std::copy_n(new_k.data().begin() + static_cast<long>(h * d), d,
                    k.begin() + static_cast<long>((h * width + static_cast<std::size_t>(t)) * d));
        std::copy_n(new_v.data().begin() + static_cast<long>(h * d), d,
                    v.begin() + static_cast<long>((h * width + static_cast<std::size_t>(t)) * d));
      }
      nn::Tensor<T> kt(n * width, d, k), vt(n * width, d, v);
      s.keys[l] = std::move(k);
      s.values[l] = std::move(v);
      x = layer_forward(layer, x, kt, vt, self_layout, s.mem_keys[l], s.mem_values[l], cross_layout, rng, false);
    }
    s.length = t + 1;
    s.hyps = n;
    return nn::linear(x, out_w_, out_b_);
  }

 private:
  nn::Tensor<T> embed_tokens(std::span<const int> ids) const {
    return nn::scale(nn::embed(embed_, ids), std::sqrt(static_cast<T>(cfg_.d_model)));
  }

  template <class Rng>
  nn::Tensor<T> layer_forward(const DecoderLayer<T>& layer, const nn::Tensor<T>& x, const nn::Tensor<T>& self_k,
                              const nn::Tensor<T>& self_v, const nn::AttentionLayout& self_layout,
                              const nn::Tensor<T>& mem_k, const nn::Tensor<T>& mem_v,
                              const nn::AttentionLayout& cross_layout, Rng& rng, bool training) const {
    const T p = static_cast<T>(cfg_.dropout);
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(cfg_.head_dim()));
    nn::RelativeTerms<T> rel;
    rel.key_table = layer.rel_k;
    rel.value_table = layer.rel_v;
    const auto& sa = layer.self_attn;
    auto a = nn::multihead_attention(nn::matmul(x, sa.w_q), self_k, self_v, self_layout, heads, scale, rel);
    a = nn::dropout(nn::linear(a, sa.w_o, sa.b_o), p, rng, training);
    auto y = layer.norm1(nn::add(x, a));
    const auto& ca = layer.cross_attn;
    auto c = nn::multihead_attention(nn::matmul(y, ca.w_q), mem_k, mem_v, cross_layout, heads, scale);
    c = nn::dropout(nn::linear(c, ca.w_o, ca.b_o), p, rng, training);
    y = layer.norm2(nn::add(y, c));
    auto f = nn::dropout(layer.ffn(y), p, rng, training);
    return layer.norm3(nn::add(y, f));
  }

  ModelConfig cfg_;
  nn::Tensor<T> embed_, out_w_, out_b_;
  std::vector<DecoderLayer<T>> layers_;
};

}  // namespace g2s::model
