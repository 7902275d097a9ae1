// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "g2s/graph/featurize.hpp"
#include "g2s/nn/tensor.hpp"

namespace g2s::nn {

/// out[t] = sum of values[f] over f in lists[t]; empty lists give zeros.
template <class T>
Tensor<T> segment_sum(const Tensor<T>& values, const graph::Csr& lists) {
  const std::size_t n = static_cast<std::size_t>(lists.size()), m = values.cols();
  std::vector<T> out(n * m, T(0));
  for (int t = 0; t < lists.size(); ++t)
    for (int f : lists[t])
      for (std::size_t c = 0; c < m; ++c)
        out[static_cast<std::size_t>(t) * m + c] += values.data()[static_cast<std::size_t>(f) * m + c];
  return Tensor<T>::make_result(n, m, std::move(out), {&values}, [values, lists, m](Node<T>& self) {
    if (T* gv = grad_ptr(values))
      for (int t = 0; t < lists.size(); ++t)
        for (int f : lists[t])
          for (std::size_t c = 0; c < m; ++c)
            gv[static_cast<std::size_t>(f) * m + c] += self.grad[static_cast<std::size_t>(t) * m + c];
  });
}

/// Multi-head additive attention over member lists.
///
/// For target t and member f in lists[t], head h owns columns
/// [h*dh, (h+1)*dh). Score e = a_h . LeakyReLU(ctx[t]_h + key[f]_h); the
/// weights are a softmax over the list, and out[t]_h = sum alpha * value[f]_h.
/// Empty lists give zeros. `ctx` is target-indexed, `key` and `value` are
/// member-indexed; `attn` is a (1 x cols) row holding every head's vector.
template <class T>
Tensor<T> additive_attention(const Tensor<T>& ctx, const Tensor<T>& key, const Tensor<T>& value, const Tensor<T>& attn,
                             const graph::Csr& lists, std::size_t heads, T slope,
                             std::vector<T>* weights_out = nullptr) {
  const std::size_t m = ctx.cols();
  if (key.cols() != m || value.cols() != m || attn.rows() != 1 || attn.cols() != m)
    throw_shape("additive_attention", ctx.shape(), key.shape());
  if (heads == 0 || m % heads != 0) throw_shape("additive_attention heads", ctx.shape(), {heads, 0});
  if (static_cast<std::size_t>(lists.size()) != ctx.rows())
    throw_shape("additive_attention lists", ctx.shape(), {static_cast<std::size_t>(lists.size()), 0});
  const std::size_t dh = m / heads;
  const std::size_t n = ctx.rows();
  const auto& cx = ctx.values();
  const auto& kx = key.values();
  const auto& vx = value.values();
  const auto& ax = attn.values();

  // alpha is stored per (list entry, head) in list order.
  std::vector<T> alpha(lists.indices.size() * heads, T(0));
  std::vector<T> out(n * m, T(0));
  std::vector<T> score;
  for (std::size_t t = 0; t < n; ++t) {
    const auto members = lists[static_cast<int>(t)];
    if (members.empty()) continue;
    const std::size_t base = static_cast<std::size_t>(lists.offsets[t]);
    score.assign(members.size(), T(0));
    for (std::size_t h = 0; h < heads; ++h) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < members.size(); ++j) {
        const std::size_t f = static_cast<std::size_t>(members[j]);
        T e = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
          const T p = cx[t * m + c] + kx[f * m + c];
          e += ax[c] * (p > 0 ? p : slope * p);
        }
        score[j] = e;
        mx = std::max(mx, e);
      }
      T z = 0;
      for (std::size_t j = 0; j < members.size(); ++j) z += score[j] = std::exp(score[j] - mx);
      for (std::size_t j = 0; j < members.size(); ++j) {
        const T w = score[j] / z;
        alpha[(base + j) * heads + h] = w;
        const std::size_t f = static_cast<std::size_t>(members[j]);
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[t * m + c] += w * vx[f * m + c];
      }
    }
  }
  if (weights_out) *weights_out = alpha;
  return Tensor<T>::make_result(
      n, m, std::move(out), {&ctx, &key, &value, &attn},
      [ctx, key, value, attn, lists, heads, slope, dh, m, alpha = std::move(alpha)](Node<T>& self) {
        T* gc = grad_ptr(ctx);
        T* gk = grad_ptr(key);
        T* gv = grad_ptr(value);
        T* ga = grad_ptr(attn);
        const auto& cx = ctx.values();
        const auto& kx = key.values();
        const auto& vx = value.values();
        const auto& ax = attn.values();
        std::vector<T> dalpha;
        for (int ti = 0; ti < lists.size(); ++ti) {
          const auto members = lists[ti];
          if (members.empty()) continue;
          const auto t = static_cast<std::size_t>(ti);
          const std::size_t base = static_cast<std::size_t>(lists.offsets[t]);
          dalpha.assign(members.size(), T(0));
          for (std::size_t h = 0; h < heads; ++h) {
            const T* g = self.grad.data() + t * m + h * dh;
            T dot = 0;
            for (std::size_t j = 0; j < members.size(); ++j) {
              const std::size_t f = static_cast<std::size_t>(members[j]);
              const T w = alpha[(base + j) * heads + h];
              T da = 0;
              for (std::size_t c = 0; c < dh; ++c) {
                da += g[c] * vx[f * m + h * dh + c];
                if (gv) gv[f * m + h * dh + c] += w * g[c];
              }
              dalpha[j] = da;
              dot += w * da;
            }
            for (std::size_t j = 0; j < members.size(); ++j) {
              const std::size_t f = static_cast<std::size_t>(members[j]);
              const T de = alpha[(base + j) * heads + h] * (dalpha[j] - dot);
              if (de == T(0)) continue;
              for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
                const T p = cx[t * m + c] + kx[f * m + c];
                if (ga) ga[c] += de * (p > 0 ? p : slope * p);
                const T dp = de * ax[c] * (p > 0 ? T(1) : slope);
                if (gc) gc[t * m + c] += dp;
                if (gk) gk[f * m + c] += dp;
              }
            }
          }
        }
      });
}

}  // namespace g2s::nn
