#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"
#include "retag/tables/linearize.hpp"

namespace retag {

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 128;
  int ffn = 256;
  int vocab_size = 0;  // filled from the vocabulary
  int max_len = 256;
  int codebook_size = 64;  // K
  Strategy strategy = Strategy::ReTAG;
  int codebook_count = 6;
  double dropout = 0.0;

  void validate() const {
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    if (heads < 1 || hidden < 1 || hidden % heads != 0) throw ConfigError("model: hidden must be divisible by heads");
    if (ffn < 1) throw ConfigError("model: ffn must be >= 1");
    if (vocab_size <= 6) throw ConfigError("model: vocab_size must exceed the special tokens");
    if (max_len < 2) throw ConfigError("model: max_len must be >= 2");
    if (codebook_size < 2) throw ConfigError("model: codebook_size (K) must be >= 2");
    if (codebook_count != 2 && codebook_count != 6) throw ConfigError("model: codebook_count must be 2 or 6");
    if (dropout < 0 || dropout >= 1) throw ConfigError("model: dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"hidden", c.hidden},
          {"ffn", c.ffn},
          {"vocab_size", c.vocab_size},
          {"max_len", c.max_len},
          {"codebook_size", c.codebook_size},
          {"strategy", strategy_name(c.strategy)},
          {"codebook_count", c.codebook_count},
          {"dropout", c.dropout}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "layers") base.layers = it->get<int>();
    else if (k == "heads") base.heads = it->get<int>();
    else if (k == "hidden") base.hidden = it->get<int>();
    else if (k == "ffn") base.ffn = it->get<int>();
    else if (k == "vocab_size") base.vocab_size = it->get<int>();
    else if (k == "max_len") base.max_len = it->get<int>();
    else if (k == "codebook_size") base.codebook_size = it->get<int>();
    else if (k == "strategy") base.strategy = parse_strategy(it->get<std::string>());
    else if (k == "codebook_count") base.codebook_count = it->get<int>();
    else if (k == "dropout") base.dropout = it->get<double>();
    else throw ConfigError("model: unknown key '" + k + "'");
  }
  return base;
}

}  // namespace retag
