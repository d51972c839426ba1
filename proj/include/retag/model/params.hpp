#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retag/codebook/codebook.hpp"
#include "retag/model/config.hpp"
#include "retag/numerics/rng.hpp"
#include "retag/numerics/tensor.hpp"

namespace retag {

enum class InitKind { Normal002, Xavier, Zeros, Ones, Codebook };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init;
};

/// Every named tensor of a model with the given config, in a fixed order.
inline std::vector<ParamSpec> param_manifest(const ModelConfig& c) {
  const auto h = static_cast<std::size_t>(c.hidden), f = static_cast<std::size_t>(c.ffn);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  std::vector<ParamSpec> m;
  m.push_back({"embed.tokens", {v, h}, InitKind::Normal002});
  m.push_back({"embed.positions", {static_cast<std::size_t>(c.max_len), h}, InitKind::Normal002});
  auto norm = [&](const std::string& p) {
    m.push_back({p + ".g", {h}, InitKind::Ones});
    m.push_back({p + ".b", {h}, InitKind::Zeros});
  };
  auto attn = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) m.push_back({p + "." + w, {h, h}, InitKind::Xavier});
    for (const char* b : {"bq", "bk", "bv", "bo"}) m.push_back({p + "." + b, {h}, InitKind::Zeros});
  };
  auto ffn = [&](const std::string& p) {
    m.push_back({p + ".w1", {h, f}, InitKind::Xavier});
    m.push_back({p + ".b1", {f}, InitKind::Zeros});
    m.push_back({p + ".w2", {f, h}, InitKind::Xavier});
    m.push_back({p + ".b2", {h}, InitKind::Zeros});
  };
  for (int l = 0; l < c.layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    norm(p + ".ln1");
    attn(p + ".attn");
    norm(p + ".ln2");
    ffn(p + ".ffn");
  }
  norm("enc.ln_f");
  for (int l = 0; l < c.layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    norm(p + ".ln1");
    attn(p + ".self");
    norm(p + ".ln2");
    attn(p + ".cross");
    norm(p + ".ln3");
    ffn(p + ".ffn");
  }
  norm("dec.ln_f");
  m.push_back({"dec.out.w", {h, v}, InitKind::Xavier});
  m.push_back({"dec.out.b", {v}, InitKind::Zeros});
  m.push_back({"weight_head.w", {h, kNumCategories}, InitKind::Xavier});
  m.push_back({"weight_head.b", {kNumCategories}, InitKind::Zeros});
  m.push_back({"ci.w", {h, 2}, InitKind::Xavier});
  m.push_back({"ci.b", {2}, InitKind::Zeros});
  for (const auto& name : CodebookBank<float>::book_names(c.codebook_count))
    m.push_back({"codebook." + name, {static_cast<std::size_t>(c.codebook_size), h}, InitKind::Codebook});
  return m;
}

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor<T>> tensors;

  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("model: no parameter named '" + name + "'");
    return it->second;
  }

  /// Embeddings normal(0, 0.02), matrices Xavier-uniform, biases zero,
  /// norm gains one, codes uniform(-1/K, 1/K). Drawn from the "init" stream.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(seed, "init");
    for (const auto& spec : param_manifest(config)) {
      const std::size_t n = shape_numel(spec.shape);
      std::vector<T> v(n, T(0));
      switch (spec.init) {
        case InitKind::Normal002:
          for (auto& x : v) x = static_cast<T>(rng.normal(0.0, 0.02));
          break;
        case InitKind::Xavier: {
          const double bound = std::sqrt(6.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
          for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
          break;
        }
        case InitKind::Ones:
          std::fill(v.begin(), v.end(), T(1));
          break;
        case InitKind::Zeros:
          break;
        case InitKind::Codebook: {
          p.tensors.emplace(spec.name, CodebookBank<T>::init_codes(spec.shape[0], spec.shape[1], rng));
          continue;
        }
      }
      p.tensors.emplace(spec.name, Tensor<T>(spec.shape, std::move(v), true));
    }
    return p;
  }

  CodebookBank<T> bank() const {
    std::vector<Tensor<T>> books;
    for (const auto& name : CodebookBank<T>::book_names(config.codebook_count)) books.push_back(at("codebook." + name));
    return CodebookBank<T>(config.codebook_count, std::move(books));
  }

  void zero_grad() {
    for (auto& [_, t] : tensors) t.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.numel();
    return n;
  }

  /// Deep copy, optionally into another precision.
  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>(true));
    return out;
  }

  ModelParams clone() const { return cast<T>(); }
};

}  // namespace retag
