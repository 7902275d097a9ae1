// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "g2s/nn/tensor.hpp"

namespace g2s::nn {

/// Which keys each query row sees. Query i attends to key rows
/// [key_begin[i], key_end[i]); `rel` (optional) holds one relative-table row
/// index per (query, key) pair, concatenated in query order.
struct AttentionLayout {
  std::vector<int> key_begin;
  std::vector<int> key_end;
  std::vector<int> rel;

  std::size_t queries() const { return key_begin.size(); }
  std::size_t pairs() const {
    std::size_t p = 0;
    for (std::size_t i = 0; i < key_begin.size(); ++i) p += static_cast<std::size_t>(key_end[i] - key_begin[i]);
    return p;
  }
};

/// Optional additions to dot-product attention.
template <class T>
struct RelativeTerms {
  Tensor<T> content_bias;   // (1 x d), added to queries for the key term
  Tensor<T> position_bias;  // (1 x d), added to queries for the table term
  Tensor<T> key_table;      // (R x d), scored against queries
  Tensor<T> value_table;    // (R x d), added to values
};

/// Multi-head attention with per-row key ranges and relative tables.
///
/// Head h owns columns [h*dh, (h+1)*dh). For query i and key j:
///   score = ((q_i + c) . k_j + (q_i + d) . RK[r]) * scale
///   out_i = sum softmax(score) * (v_j + RV[r])
/// where r is the pair's relative index and absent terms drop out. Queries
/// with an empty range produce zeros.
template <class T>
Tensor<T> multihead_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const AttentionLayout& layout,
                              std::size_t heads, T scale, const RelativeTerms<T>& rel = {},
                              std::vector<T>* weights_out = nullptr) {
  const std::size_t m = q.cols();
  if (k.cols() != m || v.cols() != m || k.rows() != v.rows()) throw_shape("attention", q.shape(), k.shape());
  if (layout.queries() != q.rows()) throw_shape("attention layout", q.shape(), {layout.queries(), 0});
  if (heads == 0 || m % heads != 0) throw_shape("attention heads", q.shape(), {heads, 0});
  const bool use_rk = rel.key_table.defined();
  const bool use_rv = rel.value_table.defined();
  const bool use_c = rel.content_bias.defined();
  const bool use_d = rel.position_bias.defined();
  if ((use_rk || use_rv) && layout.rel.size() != layout.pairs())
    throw std::invalid_argument("attention: relative index count does not match pair count");
  if (use_rk && rel.key_table.cols() != m) throw_shape("attention key table", q.shape(), rel.key_table.shape());
  if (use_rv && rel.value_table.cols() != m) throw_shape("attention value table", q.shape(), rel.value_table.shape());
  for (std::size_t i = 0; i < layout.queries(); ++i)
    if (layout.key_begin[i] < 0 || layout.key_end[i] < layout.key_begin[i] ||
        static_cast<std::size_t>(layout.key_end[i]) > k.rows())
      throw std::out_of_range("attention: key range outside key rows");

  const std::size_t dh = m / heads;
  const std::size_t n = q.rows();
  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  const T* C = use_c ? rel.content_bias.data().data() : nullptr;
  const T* D = use_d ? rel.position_bias.data().data() : nullptr;
  const T* RK = use_rk ? rel.key_table.data().data() : nullptr;
  const T* RV = use_rv ? rel.value_table.data().data() : nullptr;

  std::vector<std::size_t> pair_off(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    pair_off[i + 1] = pair_off[i] + static_cast<std::size_t>(layout.key_end[i] - layout.key_begin[i]);
  std::vector<T> alpha(pair_off[n] * heads, T(0));
  std::vector<T> out(n * m, T(0));
  std::vector<T> s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t kb = static_cast<std::size_t>(layout.key_begin[i]);
    const std::size_t cnt = pair_off[i + 1] - pair_off[i];
    if (cnt == 0) continue;
    s.assign(cnt, T(0));
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < cnt; ++j) {
        const T* kr = K + (kb + j) * m;
        T e = 0;
        for (std::size_t c = c0; c < c0 + dh; ++c) e += (Q[i * m + c] + (C ? C[c] : T(0))) * kr[c];
        if (RK) {
          const T* rr = RK + static_cast<std::size_t>(layout.rel[pair_off[i] + j]) * m;
          for (std::size_t c = c0; c < c0 + dh; ++c) e += (Q[i * m + c] + (D ? D[c] : T(0))) * rr[c];
        }
        s[j] = e * scale;
        mx = std::max(mx, s[j]);
      }
      T z = 0;
      for (std::size_t j = 0; j < cnt; ++j) z += s[j] = std::exp(s[j] - mx);
      for (std::size_t j = 0; j < cnt; ++j) {
        const T w = s[j] / z;
        alpha[(pair_off[i] + j) * heads + h] = w;
        const T* vr = V + (kb + j) * m;
        for (std::size_t c = c0; c < c0 + dh; ++c) out[i * m + c] += w * vr[c];
        if (RV) {
          const T* rr = RV + static_cast<std::size_t>(layout.rel[pair_off[i] + j]) * m;
          for (std::size_t c = c0; c < c0 + dh; ++c) out[i * m + c] += w * rr[c];
        }
      }
    }
  }
  if (weights_out) *weights_out = alpha;

  std::vector<Tensor<T>> inputs{q, k, v, rel.content_bias, rel.position_bias, rel.key_table, rel.value_table};
  return Tensor<T>::make_result(
      n, m, std::move(out), inputs,
      [q, k, v, rel, layout, heads, scale, dh, m, n, pair_off = std::move(pair_off),
       alpha = std::move(alpha)](Node<T>& self) {
        const T* Q = q.data().data();
        const T* K = k.data().data();
        const T* V = v.data().data();
        const T* C = rel.content_bias.defined() ? rel.content_bias.data().data() : nullptr;
        const T* D = rel.position_bias.defined() ? rel.position_bias.data().data() : nullptr;
        const T* RK = rel.key_table.defined() ? rel.key_table.data().data() : nullptr;
        const T* RV = rel.value_table.defined() ? rel.value_table.data().data() : nullptr;
        T* gq = grad_ptr(q);
        T* gk = grad_ptr(k);
        T* gv = grad_ptr(v);
        T* gc = grad_ptr(rel.content_bias);
        T* gd = grad_ptr(rel.position_bias);
        T* grk = grad_ptr(rel.key_table);
        T* grv = grad_ptr(rel.value_table);
        std::vector<T> da;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t kb = static_cast<std::size_t>(layout.key_begin[i]);
          const std::size_t cnt = pair_off[i + 1] - pair_off[i];
          if (cnt == 0) continue;
          da.assign(cnt, T(0));
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            const T* g = self.grad.data() + i * m;
            T dot = 0;
            for (std::size_t j = 0; j < cnt; ++j) {
              const std::size_t p = pair_off[i] + j;
              const T w = alpha[p * heads + h];
              const T* vr = V + (kb + j) * m;
              const T* rv = RV ? RV + static_cast<std::size_t>(layout.rel[p]) * m : nullptr;
              T acc = 0;
              for (std::size_t c = c0; c < c0 + dh; ++c) {
                acc += g[c] * (vr[c] + (rv ? rv[c] : T(0)));
                if (gv) gv[(kb + j) * m + c] += w * g[c];
                if (grv) grv[static_cast<std::size_t>(layout.rel[p]) * m + c] += w * g[c];
              }
              da[j] = acc;
              dot += w * acc;
            }
            for (std::size_t j = 0; j < cnt; ++j) {
              const std::size_t p = pair_off[i] + j;
              const T de = alpha[p * heads + h] * (da[j] - dot) * scale;
              if (de == T(0)) continue;
              const T* kr = K + (kb + j) * m;
              for (std::size_t c = c0; c < c0 + dh; ++c) {
                if (gq) gq[i * m + c] += de * kr[c];
                if (gc) gc[c] += de * kr[c];
                if (gk) gk[(kb + j) * m + c] += de * (Q[i * m + c] + (C ? C[c] : T(0)));
              }
              if (RK) {
                const std::size_t r = static_cast<std::size_t>(layout.rel[p]);
                const T* rr = RK + r * m;
                for (std::size_t c = c0; c < c0 + dh; ++c) {
                  if (gq) gq[i * m + c] += de * rr[c];
                  if (gd) gd[c] += de * rr[c];
                  if (grk) grk[r * m + c] += de * (Q[i * m + c] + (D ? D[c] : T(0)));
                }
              }
            }
          }
        }
      });
}

}  // namespace g2s::nn
