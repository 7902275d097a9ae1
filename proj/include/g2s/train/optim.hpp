// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2s/nn/params.hpp"

namespace g2s::train {

/// factor * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
inline double noam_lr(long step, int d_model, double factor, long warmup) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (warmup < 1 || d_model < 1) throw std::invalid_argument("noam_lr: warmup and d_model must be positive");
  const auto s = static_cast<double>(step);
  const auto w = static_cast<double>(warmup);
  return factor / std::sqrt(static_cast<double>(d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  int max_tokens = 4096;
  int accum_steps = 4;
  long total_steps = 300000;
  double noam_factor = 2.0;
  long warmup_steps = 8000;
  double dropout = 0.1;
  std::uint64_t seed = 42;
  long checkpoint_every = 5000;
  std::array<double, 2> adam_betas = {0.9, 0.998};
  double adam_eps = 1e-9;

  void validate() const {
    if (!(total_steps > warmup_steps && warmup_steps > 0))
      throw ConfigError("need total_steps > warmup_steps > 0");
    if (max_tokens < 1 || accum_steps < 1 || checkpoint_every < 1)
      throw ConfigError("max_tokens, accum_steps and checkpoint_every must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
    if (noam_factor <= 0 || adam_eps <= 0) throw ConfigError("noam_factor and adam_eps must be positive");
    for (double b : adam_betas)
      if (b < 0 || b >= 1) throw ConfigError("adam betas must lie in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"max_tokens", c.max_tokens},     {"accum_steps", c.accum_steps},
                     {"total_steps", c.total_steps},   {"noam_factor", c.noam_factor},
                     {"warmup_steps", c.warmup_steps}, {"dropout", c.dropout},
                     {"seed", c.seed},                 {"checkpoint_every", c.checkpoint_every},
                     {"adam_betas", c.adam_betas},     {"adam_eps", c.adam_eps}};
}

/// Strict: unknown keys are rejected.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "max_tokens") c.max_tokens = v.get<int>();
    else if (key == "accum_steps") c.accum_steps = v.get<int>();
    else if (key == "total_steps") c.total_steps = v.get<long>();
    else if (key == "noam_factor") c.noam_factor = v.get<double>();
    else if (key == "warmup_steps") c.warmup_steps = v.get<long>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "checkpoint_every") c.checkpoint_every = v.get<long>();
    else if (key == "adam_betas") c.adam_betas = v.get<std::array<double, 2>>();
    else if (key == "adam_eps") c.adam_eps = v.get<double>();
    else throw ConfigError("unknown train config key: " + key);
  }
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

/// Adam with bias correction; the learning rate is supplied per step.
template <class T>
class Adam {
 public:
  Adam(nn::ParamStore<T>& params, double beta1, double beta2, double eps)
      : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_.all()) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& ps = params_.all();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = ps[i];
      if (!p.trainable || !p.tensor.has_grad()) continue;
      auto vals = p.tensor.data();
      const auto g = p.tensor.grad();
      for (std::size_t k = 0; k < vals.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
        const double mhat = m_[i][k] / c1;
        const double vhat = v_[i][k] / c2;
        vals[k] = static_cast<T>(static_cast<double>(vals[k]) - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long steps() const { return t_; }

 private:
  nn::ParamStore<T>& params_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace g2s::train
