// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "g2s/graph/batch.hpp"
#include "g2s/model/config.hpp"
#include "g2s/nn/attention.hpp"
#include "g2s/nn/ops.hpp"
#include "g2s/nn/params.hpp"

namespace g2s::model {

/// Each atom attends to the atoms of its own input graph; the relative index
/// of a pair is its distance bucket.
inline nn::AttentionLayout atom_layout(const graph::Batch& b) {
  nn::AttentionLayout lay;
  for (int g = 0; g < b.num_graphs; ++g) {
    const int begin = b.atom_offset[static_cast<std::size_t>(g)];
    const int n = b.graph_atoms(g);
    const auto& buckets = b.buckets[static_cast<std::size_t>(g)];
    for (int u = 0; u < n; ++u) {
      lay.key_begin.push_back(begin);
      lay.key_end.push_back(begin + n);
      for (int v = 0; v < n; ++v) lay.rel.push_back(buckets[static_cast<std::size_t>(u * n + v)]);
    }
  }
  return lay;
}

/// Affine layer normalization parameters.
template <class T>
struct LayerNormParams {
  nn::Tensor<T> gamma, beta;
  void build(nn::ParamStore<T>& ps, const std::string& prefix, std::size_t d) {
    gamma = ps.add(prefix + ".gamma", 1, d);
    beta = ps.add(prefix + ".beta", 1, d);
  }
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const { return nn::layer_norm(x, gamma, beta); }
};

/// Position-wise feed-forward block with GELU.
template <class T>
struct FeedForward {
  nn::Tensor<T> w1, b1, w2, b2;
  void build(nn::ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t ffn) {
    w1 = ps.add(prefix + ".W_1", d, ffn);
    b1 = ps.add(prefix + ".b_1", 1, ffn);
    w2 = ps.add(prefix + ".W_2", ffn, d);
    b2 = ps.add(prefix + ".b_2", 1, d);
  }
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const {
    return nn::linear(nn::gelu(nn::linear(x, w1, b1)), w2, b2);
  }
};

/// Query, key, value and output projections. Keys carry no bias: a key bias
/// only shifts every score of a query row by the same amount.
template <class T>
struct AttentionProjections {
  nn::Tensor<T> w_q, w_k, w_v, b_v, w_o, b_o;
  void build(nn::ParamStore<T>& ps, const std::string& prefix, std::size_t d) {
    w_q = ps.add(prefix + ".W_q", d, d);
    w_k = ps.add(prefix + ".W_k", d, d);
    w_v = ps.add(prefix + ".W_v", d, d);
    b_v = ps.add(prefix + ".b_v", 1, d);
    w_o = ps.add(prefix + ".W_o", d, d);
    b_o = ps.add(prefix + ".b_o", 1, d);
  }
};

template <class T>
struct GlobalLayer {
  AttentionProjections<T> attn;
  LayerNormParams<T> norm1, norm2;
  FeedForward<T> ffn;
};

/// Transformer encoder over atoms with distance-bucket relative attention.
template <class T>
class GlobalEncoder {
 public:
  GlobalEncoder() = default;
  GlobalEncoder(nn::ParamStore<T>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    const auto d = static_cast<std::size_t>(cfg.d_model);
    if (cfg.global_layers == 0) return;
    content_bias_ = ps.add("global.c", 1, d);
    if (cfg.relative_positions) {
      position_bias_ = ps.add("global.d", 1, d);
      bucket_table_ = ps.add("global.r", graph::kNumBuckets, d);
    }
    for (int l = 0; l < cfg.global_layers; ++l) {
      const std::string p = "global.layer" + std::to_string(l);
      GlobalLayer<T> layer;
      layer.attn.build(ps, p + ".attn", d);
      layer.norm1.build(ps, p + ".norm1", d);
      layer.ffn.build(ps, p + ".ffn", d, static_cast<std::size_t>(cfg.ffn));
      layer.norm2.build(ps, p + ".norm2", d);
      layers_.push_back(layer);
    }
  }

  /// One relative attention sublayer including its output projection.
  nn::Tensor<T> attention(const GlobalLayer<T>& layer, const nn::Tensor<T>& x, const nn::AttentionLayout& layout,
                          std::vector<T>* weights = nullptr) const {
    const auto& p = layer.attn;
    nn::RelativeTerms<T> rel;
    rel.content_bias = content_bias_;
    if (cfg_.relative_positions) {
      rel.position_bias = position_bias_;
      rel.key_table = bucket_table_;
    }
    const T scale = T(1) / std::sqrt(static_cast<T>(cfg_.head_dim()));
    auto a = nn::multihead_attention(nn::matmul(x, p.w_q), nn::matmul(x, p.w_k), nn::linear(x, p.w_v, p.b_v), layout,
                                     static_cast<std::size_t>(cfg_.heads), scale, rel, weights);
    return nn::linear(a, p.w_o, p.b_o);
  }

  template <class Rng>
  nn::Tensor<T> forward(const nn::Tensor<T>& h_local, const nn::AttentionLayout& layout, Rng& rng,
                        bool training) const {
    const T p = static_cast<T>(cfg_.dropout);
    auto x = nn::scale(h_local, std::sqrt(static_cast<T>(cfg_.d_model)));
    for (const auto& layer : layers_) {
      auto a = nn::dropout(attention(layer, x, layout), p, rng, training);
      x = layer.norm1(nn::add(x, a));
      auto f = nn::dropout(layer.ffn(x), p, rng, training);
      x = layer.norm2(nn::add(x, f));
    }
    return x;
  }

  const std::vector<GlobalLayer<T>>& layers() const { return layers_; }

 private:
  ModelConfig cfg_;
  nn::Tensor<T> content_bias_, position_bias_, bucket_table_;
  std::vector<GlobalLayer<T>> layers_;
};

}  // namespace g2s::model
