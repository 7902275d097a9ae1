// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "g2s/graph/batch.hpp"
#include "g2s/model/config.hpp"
#include "g2s/model/decoder.hpp"
#include "g2s/model/encoder_global.hpp"
#include "g2s/model/encoder_local.hpp"
#include "g2s/nn/params.hpp"

namespace g2s::model {

/// Full graph-to-sequence model: local encoder, global encoder, decoder.
template <class T>
class Graph2Smiles {
 public:
  explicit Graph2Smiles(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    local_ = LocalEncoder<T>(params_, cfg_);
    global_ = GlobalEncoder<T>(params_, cfg_);
    decoder_ = Decoder<T>(params_, cfg_);
    initialize(seed);
  }

  Graph2Smiles(const Graph2Smiles&) = delete;
  Graph2Smiles& operator=(const Graph2Smiles&) = delete;

  /// Matrices: uniform in +-1/sqrt(fan_in); biases and the shared c, d
  /// vectors zero; layer-norm gains one; embedding and relative tables
  /// normal(0, d_model^-0.5).
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    for (auto& p : params_.all()) {
      const auto& n = p.name;
      auto ends_with = [&n](std::string_view s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
      if (ends_with(".gamma")) {
        nn::init_constant(p.tensor, T(1));
      } else if (ends_with(".a")) {
        // per-head score vectors: fan-in is the head width
        std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(cfg_.head_dim()), 1.0 / std::sqrt(cfg_.head_dim()));
        for (auto& x : p.tensor.values()) x = static_cast<T>(dist(rng));
      } else if (p.tensor.rows() == 1) {
        nn::init_constant(p.tensor, T(0));
      } else if (ends_with(".embed") || ends_with("global.r") || ends_with(".rel_k") || ends_with(".rel_v")) {
        nn::init_normal(p.tensor, emb_std, rng);
      } else {
        nn::init_uniform_fan_in(p.tensor, rng);
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  const LocalEncoder<T>& local() const { return local_; }
  const GlobalEncoder<T>& global() const { return global_; }
  const Decoder<T>& decoder() const { return decoder_; }

  /// Atom memory for every graph of the batch (packed rows).
  template <class Rng>
  nn::Tensor<T> encode(const graph::Batch& b, Rng& rng, bool training) const {
    const auto g = graph_tensors<T>(b);
    const auto h = local_.forward(g, rng, training);
    return global_.forward(h, atom_layout(b), rng, training);
  }

  template <class Rng>
  LossParts<T> loss(const graph::Batch& b, Rng& rng, bool training) const {
    return decoder_.loss(encode(b, rng, training), b, rng, training);
  }

  /// Mean negative log-likelihood per target token, no dropout.
  nn::Tensor<T> mean_loss(const graph::Batch& b) const {
    std::mt19937_64 rng(0);
    auto parts = loss(b, rng, false);
    return nn::scale(parts.sum, parts.tokens ? T(1) / static_cast<T>(parts.tokens) : T(0));
  }

  void save(const std::string& path) const { nn::save_checkpoint(path, params_); }
  void load(const std::string& path) { nn::load_checkpoint(path, params_); }

 private:
  ModelConfig cfg_;
  nn::ParamStore<T> params_;
  LocalEncoder<T> local_;
  GlobalEncoder<T> global_;
  Decoder<T> decoder_;
};

}  // namespace g2s::model
