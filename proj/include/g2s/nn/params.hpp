// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "g2s/nn/tensor.hpp"

namespace g2s::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

/// Named parameter registry. Registration order is the serialization order.
template <class T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, std::size_t rows, std::size_t cols, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor<T> t(rows, cols);
    t.set_requires_grad(trainable);
    index_[name] = params_.size();
    params_.push_back({name, t, trainable});
    return t;
  }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return params_[it->second].tensor;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) where fan_in is the row count.
template <class T, class Rng>
void init_uniform_fan_in(Tensor<T>& w, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : w.values()) x = static_cast<T>(dist(rng));
}

template <class T, class Rng>
void init_normal(Tensor<T>& w, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : w.values()) x = static_cast<T>(dist(rng));
}

template <class T>
void init_constant(Tensor<T>& w, T value) {
  for (auto& x : w.values()) x = value;
}

// ---------------------------------------------------------------- checkpoint IO

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'G', '2', 'S', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <class U>
U take(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw CheckpointError("checkpoint truncated");
  return v;
}
}  // namespace detail

/// Writes every parameter as little-endian f32.
template <class T>
void write_checkpoint(std::ostream& os, const ParamStore<T>& store) {
  os.write(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store.all()) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(os, 2);
    detail::put<std::uint64_t>(os, p.tensor.rows());
    detail::put<std::uint64_t>(os, p.tensor.cols());
    for (T x : p.tensor.values()) detail::put<float>(os, static_cast<float>(x));
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(os, store);
}

/// Loads values into an already-built store. Names and shapes must match.
template <class T>
void read_checkpoint(std::istream& is, ParamStore<T>& store) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
  const auto version = detail::take<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::take<std::uint32_t>(is);
  if (count != store.size())
    throw CheckpointError("checkpoint has " + std::to_string(count) + " parameters, model has " +
                          std::to_string(store.size()));
  for (auto& p : store.all()) {
    const auto len = detail::take<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("checkpoint truncated");
    if (name != p.name) throw CheckpointError("checkpoint parameter " + name + " where " + p.name + " expected");
    const auto rank = detail::take<std::uint32_t>(is);
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t total = 1;
    for (auto& d : dims) total *= d = detail::take<std::uint64_t>(is);
    if (total != p.tensor.size() || (rank == 2 && (dims[0] != p.tensor.rows() || dims[1] != p.tensor.cols())))
      throw CheckpointError("checkpoint shape mismatch for " + name);
    for (auto& x : p.tensor.values()) x = static_cast<T>(detail::take<float>(is));
  }
}

template <class T>
void load_checkpoint(const std::string& path, ParamStore<T>& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  read_checkpoint(is, store);
}

// ---------------------------------------------------------------- gradient check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences for every element of `params`.
template <class T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss_fn, std::vector<Parameter<T>>& params,
                           double eps = 1e-5) {
  for (auto& p : params) p.tensor.zero_grad();
  loss_fn().backward();
  GradCheckResult res;
  for (auto& p : params) {
    auto& vals = p.tensor.values();
    const std::vector<T> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T saved = vals[i];
      vals[i] = saved + static_cast<T>(eps);
      double up, down;
      {
        NoGradGuard ng;
        up = static_cast<double>(loss_fn().item());
        vals[i] = saved - static_cast<T>(eps);
        down = static_cast<double>(loss_fn().item());
      }
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = p.name + "[" + std::to_string(i) + "]";
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace g2s::nn
