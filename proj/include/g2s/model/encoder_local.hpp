// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "g2s/graph/batch.hpp"
#include "g2s/model/config.hpp"
#include "g2s/nn/graph_ops.hpp"
#include "g2s/nn/ops.hpp"
#include "g2s/nn/params.hpp"

namespace g2s::model {

inline constexpr double kAttentionSlope = 0.2;

/// Packed graph input in the working precision.
template <class T>
struct GraphTensors {
  nn::Tensor<T> atoms;       // N x 102
  nn::Tensor<T> edge_input;  // E x 114: [x_u ; x_uv] for each directed bond (u, v)
  const graph::Csr* incoming = nullptr;
  const graph::Csr* incoming_all = nullptr;
};

template <class T>
GraphTensors<T> graph_tensors(const graph::Batch& b) {
  constexpr auto A = static_cast<std::size_t>(graph::kAtomFeatureDim);
  constexpr auto B = static_cast<std::size_t>(graph::kBondFeatureDim);
  const auto n = static_cast<std::size_t>(b.num_atoms());
  const auto e = static_cast<std::size_t>(b.num_edges());
  GraphTensors<T> g;
  g.atoms = nn::Tensor<T>(n, A, std::vector<T>(b.atom_feats.begin(), b.atom_feats.end()));
  std::vector<T> ctx(e * (A + B));
  for (std::size_t k = 0; k < e; ++k) {
    const auto u = static_cast<std::size_t>(b.edge_src[k]);
    std::copy_n(b.atom_feats.begin() + static_cast<long>(u * A), A, ctx.begin() + static_cast<long>(k * (A + B)));
    std::copy_n(b.bond_feats.begin() + static_cast<long>(k * B), B, ctx.begin() + static_cast<long>(k * (A + B) + A));
  }
  g.edge_input = nn::Tensor<T>(e, A + B, std::move(ctx));
  g.incoming = &b.incoming;
  g.incoming_all = &b.incoming_all;
  return g;
}

/// Parameters of one attention aggregation: score context projection,
/// message projection, per-head score vectors, and value projection.
template <class T>
struct Aggregation {
  nn::Tensor<T> w_ctx, b_ctx, w_msg, a, w_v, b_v;

  void build(nn::ParamStore<T>& ps, const std::string& prefix, std::size_t ctx_dim, std::size_t d, bool attention) {
    if (attention) {
      w_ctx = ps.add(prefix + ".W_qk_ctx", ctx_dim, d);
      b_ctx = ps.add(prefix + ".b_qk", 1, d);
      w_msg = ps.add(prefix + ".W_qk_msg", d, d);
      a = ps.add(prefix + ".a", 1, d);
    }
    w_v = ps.add(prefix + ".W_v", d, d);
    b_v = ps.add(prefix + ".b_v", 1, d);
  }

  /// Score context of each target row; undefined for sum aggregation.
  nn::Tensor<T> context(const nn::Tensor<T>& ctx_rows) const {
    return a.defined() ? nn::linear(ctx_rows, w_ctx, b_ctx) : nn::Tensor<T>{};
  }

  /// Aggregates `messages` into one row per list of `lists`.
  nn::Tensor<T> operator()(const nn::Tensor<T>& ctx, const nn::Tensor<T>& messages, const graph::Csr& lists,
                           std::size_t heads, std::vector<T>* weights = nullptr) const {
    auto values = nn::linear(messages, w_v, b_v);
    if (!a.defined()) return nn::segment_sum(values, lists);
    auto keys = nn::matmul(messages, w_msg);
    return nn::additive_attention(ctx, keys, values, a, lists, heads, T(kAttentionSlope), weights);
  }
};

/// Directed message passing encoder with attention (D-GAT) or plain sum
/// (D-GCN) aggregation.
template <class T>
class LocalEncoder {
 public:
  static constexpr std::size_t kAtomDim = graph::kAtomFeatureDim;
  static constexpr std::size_t kEdgeDim = graph::kAtomFeatureDim + graph::kBondFeatureDim;

  LocalEncoder() = default;
  LocalEncoder(nn::ParamStore<T>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const bool attn = cfg.local_variant == LocalVariant::DGAT;
    w_init_ = ps.add("local.W_init", kEdgeDim, d);
    b_init_ = ps.add("local.b_init", 1, d);
    msg_agg_.build(ps, "local.attn", kEdgeDim, d, attn);
    w_z_ = ps.add("local.W_z", kEdgeDim + d, d);
    b_z_ = ps.add("local.b_z", 1, d);
    w_r_ = ps.add("local.W_r", kEdgeDim + d, d);
    b_r_ = ps.add("local.b_r", 1, d);
    w_ = ps.add("local.W", kEdgeDim, d);
    u_ = ps.add("local.U", d, d);
    b_ = ps.add("local.b", 1, d);
    readout_agg_.build(ps, "local.readout", kAtomDim, d, attn);
    w_o_ = ps.add("local.W_o", kAtomDim + d, d);
  }

  /// Messages after T steps, one row per directed bond.
  template <class Rng>
  nn::Tensor<T> messages(const GraphTensors<T>& g, Rng& rng, bool training) const {
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const auto& ctx = g.edge_input;
    auto m = nn::tanh(nn::linear(ctx, w_init_, b_init_));
    if (ctx.rows() == 0) return m;
    const auto z_ctx = nn::slice_rows(w_z_, 0, kEdgeDim), z_s = nn::slice_rows(w_z_, kEdgeDim, w_z_.rows());
    const auto r_ctx = nn::slice_rows(w_r_, 0, kEdgeDim), r_s = nn::slice_rows(w_r_, kEdgeDim, w_r_.rows());
    const auto z_pre = nn::linear(ctx, z_ctx, b_z_);
    const auto r_pre = nn::linear(ctx, r_ctx, b_r_);
    const auto cand_pre = nn::linear(ctx, w_, b_);
    const auto score_ctx = msg_agg_.context(ctx);
    for (int t = 0; t < cfg_.local_steps; ++t) {
      auto s = msg_agg_(score_ctx, m, *g.incoming, heads);
      auto z = nn::sigmoid(nn::add(z_pre, nn::matmul(s, z_s)));
      auto r = nn::sigmoid(nn::add(r_pre, nn::matmul(s, r_s)));
      auto cand = nn::tanh(nn::add(cand_pre, nn::matmul(r, u_)));
      // (1 - z) * s + z * cand
      m = nn::add(s, nn::mul(z, nn::sub(cand, s)));
      if (cfg_.local_dropout) m = nn::dropout(m, static_cast<T>(cfg_.dropout), rng, training);
    }
    return m;
  }

  /// Per-atom hidden vectors h_u (N x d_model).
  template <class Rng>
  nn::Tensor<T> forward(const GraphTensors<T>& g, Rng& rng, bool training) const {
    const auto m = messages(g, rng, training);
    const auto mu = readout_agg_(readout_agg_.context(g.atoms), m, *g.incoming_all, static_cast<std::size_t>(cfg_.heads));
    return nn::gelu(nn::matmul(nn::concat_cols<T>({g.atoms, mu}), w_o_));
  }

  /// Attention weights of the readout aggregation, per (list entry, head).
  std::vector<T> readout_weights(const GraphTensors<T>& g) const {
    std::mt19937_64 rng(0);
    const auto m = messages(g, rng, false);
    std::vector<T> w;
    readout_agg_(readout_agg_.context(g.atoms), m, *g.incoming_all, static_cast<std::size_t>(cfg_.heads), &w);
    return w;
  }

  const Aggregation<T>& message_aggregation() const { return msg_agg_; }

 private:
  ModelConfig cfg_;
  nn::Tensor<T> w_init_, b_init_, w_z_, b_z_, w_r_, b_r_, w_, u_, b_, w_o_;
  Aggregation<T> msg_agg_, readout_agg_;
};

}  // namespace g2s::model
