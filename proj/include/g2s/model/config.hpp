// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <stdexcept>
#include <string>

namespace g2s::model {

enum class LocalVariant { DGAT, DGCN };

inline std::string to_string(LocalVariant v) { return v == LocalVariant::DGAT ? "dgat" : "dgcn"; }
inline LocalVariant local_variant_from(const std::string& s) {
  if (s == "dgat") return LocalVariant::DGAT;
  if (s == "dgcn") return LocalVariant::DGCN;
  throw std::invalid_argument("unknown encoder variant: " + s);
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 256;
  int heads = 8;
  int ffn = 2048;
  // local (directed message passing) encoder
  LocalVariant local_variant = LocalVariant::DGAT;
  int local_steps = 4;
  bool local_dropout = false;
  // global attention encoder; zero layers bypasses it
  int global_layers = 6;
  bool relative_positions = true;
  // decoder
  int decoder_layers = 6;
  int max_rel_pos = 4;
  int max_len = 512;
  double dropout = 0.1;
  double label_smoothing = 0.1;

  int head_dim() const { return d_model / heads; }

  void validate() const {
    if (vocab_size < 5) throw ConfigError("vocab_size must cover the four specials and one token");
    if (d_model <= 0 || heads <= 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (local_steps < 1) throw ConfigError("local_steps must be at least 1");
    if (global_layers < 0 || decoder_layers < 1) throw ConfigError("layer counts out of range");
    if (ffn <= 0 || max_rel_pos < 0 || max_len < 1) throw ConfigError("ffn, max_rel_pos, max_len out of range");
    if (dropout < 0 || dropout >= 1 || label_smoothing < 0 || label_smoothing >= 1)
      throw ConfigError("dropout and label_smoothing must lie in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"d_model", c.d_model},
                     {"heads", c.heads},
                     {"ffn", c.ffn},
                     {"local_variant", to_string(c.local_variant)},
                     {"local_steps", c.local_steps},
                     {"local_dropout", c.local_dropout},
                     {"global_layers", c.global_layers},
                     {"relative_positions", c.relative_positions},
                     {"decoder_layers", c.decoder_layers},
                     {"max_rel_pos", c.max_rel_pos},
                     {"max_len", c.max_len},
                     {"dropout", c.dropout},
                     {"label_smoothing", c.label_smoothing}};
}

/// Strict: every key must be known; missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "vocab_size") c.vocab_size = value.get<int>();
    else if (key == "d_model") c.d_model = value.get<int>();
    else if (key == "heads") c.heads = value.get<int>();
    else if (key == "ffn") c.ffn = value.get<int>();
    else if (key == "local_variant") c.local_variant = local_variant_from(value.get<std::string>());
    else if (key == "local_steps") c.local_steps = value.get<int>();
    else if (key == "local_dropout") c.local_dropout = value.get<bool>();
    else if (key == "global_layers") c.global_layers = value.get<int>();
    else if (key == "relative_positions") c.relative_positions = value.get<bool>();
    else if (key == "decoder_layers") c.decoder_layers = value.get<int>();
    else if (key == "max_rel_pos") c.max_rel_pos = value.get<int>();
    else if (key == "max_len") c.max_len = value.get<int>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "label_smoothing") c.label_smoothing = value.get<double>();
    else throw ConfigError("unknown model config key: " + key);
  }
}

}  // namespace g2s::model
