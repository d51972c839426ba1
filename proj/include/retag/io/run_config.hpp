#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "retag/corpus/generator.hpp"
#include "retag/metrics/metrics.hpp"
#include "retag/model/config.hpp"
#include "retag/trainer/trainer.hpp"

namespace retag {

struct DecodeConfig {
  int beam = 10;
  int max_len = 64;

  void validate() const {
    if (beam < 1) throw ConfigError("eval: beam must be >= 1");
    if (max_len < 1) throw ConfigError("eval: max_len must be >= 1");
  }
};

/// One JSON document with sections model, train, metric, generator, eval.
/// Missing sections and keys keep their defaults; unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  MetricConfig metric;
  GeneratorSpec generator = GeneratorSpec::defaults();
  DecodeConfig eval;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"metric", to_json(c.metric)},
          {"generator", to_json(c.generator)},
          {"eval", {{"beam", c.eval.beam}, {"max_len", c.eval.max_len}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (!it->is_object()) throw ConfigError("config: section '" + k + "' must be an object");
      if (k == "model") {
        c.model = model_config_from_json(*it, c.model);
      } else if (k == "train") {
        c.train = train_config_from_json(*it, c.train);
      } else if (k == "metric") {
        c.metric = metric_config_from_json(*it, c.metric);
      } else if (k == "generator") {
        c.generator = generator_spec_from_json(*it);
      } else if (k == "eval") {
        for (auto e = it->begin(); e != it->end(); ++e) {
          if (e.key() == "beam") c.eval.beam = e->get<int>();
          else if (e.key() == "max_len") c.eval.max_len = e->get<int>();
          else throw ConfigError("eval: unknown key '" + e.key() + "'");
        }
        c.eval.validate();
      } else {
        throw ConfigError("config: unknown section '" + k + "'");
      }
    }
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("config: wrong value type: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace retag
