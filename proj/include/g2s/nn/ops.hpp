// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "g2s/nn/tensor.hpp"

namespace g2s::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {
template <class T>
ConstMatMap<T> cmap(const T* p, std::size_t r, std::size_t c) {
  return ConstMatMap<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <class T>
MatMap<T> mmap(T* p, std::size_t r, std::size_t c) {
  return MatMap<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <class T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw_shape(op, a.shape(), b.shape());
}

// a (n x k) times b (k x m), one row at a time, so an output row never
// depends on how many rows are multiplied together.
template <class T>
void row_product(T* out, const T* a, const T* b, std::size_t n, std::size_t k, std::size_t m) {
  const auto rhs = cmap(b, k, m);
  for (std::size_t r = 0; r < n; ++r) mmap(out + r * m, 1, m).noalias() = cmap(a + r * k, 1, k) * rhs;
}
}  // namespace detail

// ---------------------------------------------------------------- linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) throw_shape("matmul", a.shape(), b.shape());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<T> out(n * m);
  detail::row_product(out.data(), a.data().data(), b.data().data(), n, k, m);
  return Tensor<T>::make_result(n, m, std::move(out), {&a, &b}, [a, b, n, k, m](Node<T>& self) {
    const auto g = detail::cmap(self.grad.data(), n, m);
    if (T* ga = grad_ptr(a)) detail::mmap(ga, n, k).noalias() += g * detail::cmap(b.data().data(), k, m).transpose();
    if (T* gb = grad_ptr(b)) detail::mmap(gb, k, m).noalias() += detail::cmap(a.data().data(), n, k).transpose() * g;
  });
}

/// x * w + bias, with w stored (in x out) and bias (1 x out) optional.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {}) {
  if (x.cols() != w.rows()) throw_shape("linear", x.shape(), w.shape());
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != m)) throw_shape("linear bias", bias.shape(), {1, m});
  std::vector<T> out(n * m);
  detail::row_product(out.data(), x.data().data(), w.data().data(), n, k, m);
  auto y = detail::mmap(out.data(), n, m);
  if (bias.defined()) y.rowwise() += detail::cmap(bias.data().data(), 1, m).row(0);
  return Tensor<T>::make_result(n, m, std::move(out), {&x, &w, &bias}, [x, w, bias, n, k, m](Node<T>& self) {
    const auto g = detail::cmap(self.grad.data(), n, m);
    if (T* gx = grad_ptr(x)) detail::mmap(gx, n, k).noalias() += g * detail::cmap(w.data().data(), k, m).transpose();
    if (T* gw = grad_ptr(w)) detail::mmap(gw, k, m).noalias() += detail::cmap(x.data().data(), n, k).transpose() * g;
    if (T* gb = grad_ptr(bias)) detail::mmap(gb, 1, m).row(0) += g.colwise().sum();
  });
}

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [a, b](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    if (T* gb = grad_ptr(b))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [a, b](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    if (T* gb = grad_ptr(b))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a, &b}, [a, b](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * b.data()[i];
    if (T* gb = grad_ptr(b))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * a.data()[i];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a}, [a, s](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * s;
  });
}

/// a + row, broadcasting a (1 x cols) row over every row of a.
template <class T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw_shape("add_row", a.shape(), row.shape());
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = a.data()[r * m + c] + row.data()[c];
  return Tensor<T>::make_result(n, m, std::move(out), {&a, &row}, [a, row, n, m](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    if (T* gr = grad_ptr(row))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gr[c] += self.grad[r * m + c];
  });
}

namespace detail {
// Elementwise op from value f(x) and derivative df(x, y).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a}, [a, df](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * df(a.data()[i], self.value[i]);
  });
}
}  // namespace detail

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

/// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) { return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(T(-0.5) * x * x); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary(
      a, [slope](T x) { return x > 0 ? x : slope * x; }, [slope](T x, T) { return x > 0 ? T(1) : slope; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return leaky_relu(a, T(0));
}

// ---------------------------------------------------------------- shape ops

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw_shape("concat_cols", parts[0].shape(), p.shape());
    m += p.cols();
  }
  std::vector<T> out(n * m);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(p.data().data() + r * p.cols(), p.cols(), out.data() + r * m + off);
    off += p.cols();
  }
  return Tensor<T>::make_result(n, m, std::move(out), parts, [parts, n, m](Node<T>& self) {
    std::size_t o = 0;
    for (const auto& p : parts) {
      if (T* gp = grad_ptr(p))
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < p.cols(); ++c) gp[r * p.cols() + c] += self.grad[r * m + o + c];
      o += p.cols();
    }
  });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) throw_shape("concat_rows", parts[0].shape(), p.shape());
    n += p.rows();
  }
  std::vector<T> out;
  out.reserve(n * m);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor<T>::make_result(n, m, std::move(out), parts, [parts](Node<T>& self) {
    std::size_t o = 0;
    for (const auto& p : parts) {
      if (T* gp = grad_ptr(p))
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += self.grad[o + i];
      o += p.size();
    }
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw_shape("slice_cols", a.shape(), {begin, end});
  const std::size_t n = a.rows(), m = a.cols(), w = end - begin;
  std::vector<T> out(n * w);
  for (std::size_t r = 0; r < n; ++r) std::copy_n(a.data().data() + r * m + begin, w, out.data() + r * w);
  return Tensor<T>::make_result(n, w, std::move(out), {&a}, [a, n, m, w, begin](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) ga[r * m + begin + c] += self.grad[r * w + c];
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw_shape("slice_rows", a.shape(), {begin, end});
  const std::size_t m = a.cols();
  std::vector<T> out(a.data().begin() + static_cast<long>(begin * m), a.data().begin() + static_cast<long>(end * m));
  return Tensor<T>::make_result(end - begin, m, std::move(out), {&a}, [a, begin, m](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * m + i] += self.grad[i];
  });
}

/// Row gather (embedding lookup / index select); backward scatter-adds.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids) {
  const std::size_t m = table.cols();
  std::vector<T> out(ids.size() * m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<std::size_t>(ids[i]);
    if (r >= table.rows()) throw_shape("gather_rows index", table.shape(), {r, 0});
    std::copy_n(table.data().data() + r * m, m, out.data() + i * m);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Tensor<T>::make_result(ids.size(), m, std::move(out), {&table}, [table, idx, m](Node<T>& self) {
    if (T* gt = grad_ptr(table))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < m; ++c) gt[static_cast<std::size_t>(idx[i]) * m + c] += self.grad[i * m + c];
  });
}

template <class T>
Tensor<T> embed(const Tensor<T>& table, std::span<const int> ids) {
  return gather_rows(table, ids);
}

// ---------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  return Tensor<T>::make_result(1, 1, {s}, {&a}, [a](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += self.grad[0];
  });
}

/// Row-wise softmax; entries with mask 0 get probability exactly 0. Rows
/// with no unmasked entry are all zero. An empty mask means no masking.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::span<const std::uint8_t> mask = {}) {
  const std::size_t n = a.rows(), m = a.cols();
  if (!mask.empty() && mask.size() != a.size()) throw_shape("softmax mask", a.shape(), {mask.size(), 1});
  std::vector<T> out(a.size(), T(0));
  auto keep = [&mask](std::size_t i) { return mask.empty() || mask[i] != 0; };
  for (std::size_t r = 0; r < n; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < m; ++c)
      if (keep(r * m + c)) mx = std::max(mx, a.data()[r * m + c]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T z = 0;
    for (std::size_t c = 0; c < m; ++c)
      if (keep(r * m + c)) z += out[r * m + c] = std::exp(a.data()[r * m + c] - mx);
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= z;
  }
  return Tensor<T>::make_result(n, m, std::move(out), {&a}, [a, n, m](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t r = 0; r < n; ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < m; ++c) dot += self.grad[r * m + c] * self.value[r * m + c];
        for (std::size_t c = 0; c < m; ++c)
          ga[r * m + c] += self.value[r * m + c] * (self.grad[r * m + c] - dot);
      }
  });
}

/// Row-wise layer normalization with affine parameters (1 x cols).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m || beta.size() != m) throw_shape("layer_norm", x.shape(), gamma.shape());
  std::vector<T> out(x.size()), xhat(x.size()), inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = x.data().data() + r * m;
    T mean = 0;
    for (std::size_t c = 0; c < m; ++c) mean += row[c];
    mean /= static_cast<T>(m);
    T var = 0;
    for (std::size_t c = 0; c < m; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(m);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) {
      xhat[r * m + c] = (row[c] - mean) * inv_std[r];
      out[r * m + c] = xhat[r * m + c] * gamma.data()[c] + beta.data()[c];
    }
  }
  return Tensor<T>::make_result(
      n, m, std::move(out), {&x, &gamma, &beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, m](Node<T>& self) {
        T* gx = grad_ptr(x);
        T* gg = grad_ptr(gamma);
        T* gb = grad_ptr(beta);
        for (std::size_t r = 0; r < n; ++r) {
          const T* g = self.grad.data() + r * m;
          const T* xh = xhat.data() + r * m;
          if (gg)
            for (std::size_t c = 0; c < m; ++c) gg[c] += g[c] * xh[c];
          if (gb)
            for (std::size_t c = 0; c < m; ++c) gb[c] += g[c];
          if (gx) {
            T s1 = 0, s2 = 0;
            for (std::size_t c = 0; c < m; ++c) {
              const T gy = g[c] * gamma.data()[c];
              s1 += gy;
              s2 += gy * xh[c];
            }
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::size_t c = 0; c < m; ++c) {
              const T gy = g[c] * gamma.data()[c];
              gx[r * m + c] += inv_std[r] * (gy - inv_m * s1 - xh[c] * inv_m * s2);
            }
          }
        }
      });
}

/// Inverted dropout: identity when !training or p == 0.
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& a, T p, Rng& rng, bool training) {
  if (!training || p <= T(0)) return a;
  std::bernoulli_distribution keep_dist(1.0 - static_cast<double>(p));
  const T s = T(1) / (T(1) - p);
  std::vector<T> keep(a.size());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    keep[i] = keep_dist(rng) ? s : T(0);
    out[i] = a.data()[i] * keep[i];
  }
  return Tensor<T>::make_result(a.rows(), a.cols(), std::move(out), {&a}, [a, keep = std::move(keep)](Node<T>& self) {
    if (T* ga = grad_ptr(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * keep[i];
  });
}

/// Summed token cross-entropy over rows whose weight is nonzero.
/// With label smoothing eps, the target keeps 1 - eps and eps is spread
/// evenly over the remaining classes except `ignore_class`.
template <class T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const int> targets, std::span<const std::uint8_t> mask,
                            T label_smoothing = T(0), int ignore_class = -1) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n || (!mask.empty() && mask.size() != n))
    throw_shape("cross_entropy", logits.shape(), {targets.size(), mask.size()});
  std::vector<T> probs(logits.size(), T(0));
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> on(n, 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), on.begin());
  const std::size_t spread = v - 1 - ((ignore_class >= 0 && static_cast<std::size_t>(ignore_class) < v) ? 1 : 0);
  const T off_mass = (label_smoothing > 0 && spread > 0) ? label_smoothing / static_cast<T>(spread) : T(0);
  const T on_mass = T(1) - (off_mass > 0 ? label_smoothing : T(0));
  // Target distribution entry; captured by value into the backward closure.
  auto q = [tgt, on_mass, off_mass, ignore_class](std::size_t r, std::size_t c) -> T {
    if (static_cast<int>(c) == tgt[r]) return on_mass;
    if (static_cast<int>(c) == ignore_class) return T(0);
    return off_mass;
  };
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!on[r]) continue;
    const T* row = logits.data().data() + r * v;
    T mx = row[0];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    T z = 0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t c = 0; c < v; ++c) {
      probs[r * v + c] = std::exp(row[c] - lse);
      const T w = q(r, c);
      if (w != T(0)) total -= w * (row[c] - lse);
    }
  }
  return Tensor<T>::make_result(1, 1, {total}, {&logits},
                                [logits, probs = std::move(probs), on, n, v, q](Node<T>& self) {
                                  T* gl = grad_ptr(logits);
                                  if (!gl) return;
                                  const T g = self.grad[0];
                                  for (std::size_t r = 0; r < n; ++r) {
                                    if (!on[r]) continue;
                                    for (std::size_t c = 0; c < v; ++c)
                                      gl[r * v + c] += g * (probs[r * v + c] - q(r, c));
                                  }
                                });
}

/// Mean token cross-entropy over unmasked rows.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets, std::span<const std::uint8_t> mask,
                        T label_smoothing = T(0), int ignore_class = -1) {
  std::size_t count = mask.empty() ? targets.size() : 0;
  for (auto m : mask) count += m ? 1 : 0;
  auto s = cross_entropy_sum(logits, targets, mask, label_smoothing, ignore_class);
  return scale(s, count > 0 ? T(1) / static_cast<T>(count) : T(0));
}

/// Row-wise log-softmax values (no history); used by decoding.
template <class T>
std::vector<T> log_softmax_rows(std::span<const T> logits, std::size_t cols) {
  std::vector<T> out(logits.size());
  for (std::size_t r = 0; r * cols < logits.size(); ++r) {
    const T* row = logits.data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  return out;
}

}  // namespace g2s::nn
