#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "retag/model/params.hpp"
#include "retag/numerics/ops.hpp"

// Pre-norm transformer encoder/decoder blocks built on the autodiff ops.

namespace retag {

using Mask = std::vector<std::uint8_t>;  // 1 = blocked

template <typename T>
Tensor<T> affine_norm(const ModelParams<T>& p, const std::string& prefix, const Tensor<T>& x) {
  return add(mul(layer_norm(x, T(1e-5)), p.at(prefix + ".g")), p.at(prefix + ".b"));
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add(matmul(x, w), b);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng* rng) {
  if (rate <= 0 || rng == nullptr) return x;
  std::vector<T> keep(x.numel());
  const T scale_up = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& k : keep) k = rng->uniform() < rate ? T(0) : scale_up;
  return mul(x, Tensor<T>(x.shape(), std::move(keep)));
}

/// Scaled dot-product attention over already-projected q [Nq,H], k/v [Nk,H].
/// `mask` is empty, Nk long (key padding, repeated per query) or Nq*Nk.
template <typename T>
Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::span<const std::uint8_t> mask,
                 int heads) {
  const std::size_t h = q.dim(1);
  const std::size_t d = h / static_cast<std::size_t>(heads);
  const T inv = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * d;
    auto qh = heads == 1 ? q : slice(q, 1, off, d);
    auto kh = heads == 1 ? k : slice(k, 1, off, d);
    auto vh = heads == 1 ? v : slice(v, 1, off, d);
    auto scores = scale(matmul(qh, transpose(kh)), inv);
    if (!mask.empty()) scores = masked_fill(scores, mask, -std::numeric_limits<T>::infinity());
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  return heads == 1 ? outs.front() : concat(outs, 1);
}

template <typename T>
Tensor<T> project(const ModelParams<T>& p, const std::string& prefix, const char* w, const char* b,
                  const Tensor<T>& x) {
  return linear(x, p.at(prefix + "." + w), p.at(prefix + "." + b));
}

template <typename T>
Tensor<T> attention_block(const ModelParams<T>& p, const std::string& prefix, const Tensor<T>& queries,
                          const Tensor<T>& keys_values, std::span<const std::uint8_t> mask) {
  auto q = project(p, prefix, "wq", "bq", queries);
  auto k = project(p, prefix, "wk", "bk", keys_values);
  auto v = project(p, prefix, "wv", "bv", keys_values);
  return project(p, prefix, "wo", "bo", attend(q, k, v, mask, p.config.heads));
}

template <typename T>
Tensor<T> feed_forward(const ModelParams<T>& p, const std::string& prefix, const Tensor<T>& x) {
  auto hidden = gelu(linear(x, p.at(prefix + ".w1"), p.at(prefix + ".b1")));
  return linear(hidden, p.at(prefix + ".w2"), p.at(prefix + ".b2"));
}

template <typename T>
Tensor<T> embed(const ModelParams<T>& p, std::span<const int> ids) {
  if (ids.size() > static_cast<std::size_t>(p.config.max_len))
    throw LengthError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                      std::to_string(p.config.max_len));
  return add(gather_rows(p.at("embed.tokens"), ids), slice(p.at("embed.positions"), 0, 0, ids.size()));
}

inline Mask padding_mask(std::span<const int> ids, int pad_id = 0) {
  Mask m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] == pad_id;
  return m;
}

inline Mask causal_mask(std::size_t n) {
  Mask m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
  return m;
}

/// E(x): token + position embeddings through the encoder stack, [N, H].
/// Padded keys are excluded from attention.
template <typename T>
Tensor<T> encode(const ModelParams<T>& p, std::span<const int> ids, std::span<const std::uint8_t> pad_mask,
                 Rng* drop = nullptr) {
  if (pad_mask.size() != ids.size()) throw DimensionError("encode: pad mask length differs from input length");
  for (int id : ids)
    if (id < 0 || id >= p.config.vocab_size) throw RangeError("encode: token id " + std::to_string(id) + " outside vocabulary");
  const bool any_pad = std::any_of(pad_mask.begin(), pad_mask.end(), [](auto b) { return b != 0; });
  const std::span<const std::uint8_t> key_mask = any_pad ? pad_mask : std::span<const std::uint8_t>();
  auto x = embed(p, ids);
  for (int l = 0; l < p.config.layers; ++l) {
    const auto pre = "enc." + std::to_string(l);
    auto h = affine_norm(p, pre + ".ln1", x);
    x = add(x, dropout(attention_block(p, pre + ".attn", h, h, key_mask), p.config.dropout, drop));
    h = affine_norm(p, pre + ".ln2", x);
    x = add(x, dropout(feed_forward(p, pre + ".ffn", h), p.config.dropout, drop));
  }
  return affine_norm(p, "enc.ln_f", x);
}

template <typename T>
Tensor<T> encode(const ModelParams<T>& p, std::span<const int> ids) {
  const auto mask = padding_mask(ids);
  return encode(p, ids, std::span<const std::uint8_t>(mask));
}

/// Teacher-forced decoder over a memory (E(x) or the fused u). Returns
/// [T, V] logits.
template <typename T>
Tensor<T> decode(const ModelParams<T>& p, std::span<const int> dec_ids, const Tensor<T>& memory,
                 std::span<const std::uint8_t> memory_pad, Rng* drop = nullptr) {
  const auto causal = causal_mask(dec_ids.size());
  const bool any_pad = std::any_of(memory_pad.begin(), memory_pad.end(), [](auto b) { return b != 0; });
  const std::span<const std::uint8_t> cross_mask = any_pad ? memory_pad : std::span<const std::uint8_t>();
  auto x = embed(p, dec_ids);
  for (int l = 0; l < p.config.layers; ++l) {
    const auto pre = "dec." + std::to_string(l);
    auto h = affine_norm(p, pre + ".ln1", x);
    x = add(x, dropout(attention_block(p, pre + ".self", h, h, causal), p.config.dropout, drop));
    h = affine_norm(p, pre + ".ln2", x);
    x = add(x, dropout(attention_block(p, pre + ".cross", h, memory, cross_mask), p.config.dropout, drop));
    h = affine_norm(p, pre + ".ln3", x);
    x = add(x, dropout(feed_forward(p, pre + ".ffn", h), p.config.dropout, drop));
  }
  x = affine_norm(p, "dec.ln_f", x);
  return linear(x, p.at("dec.out.w"), p.at("dec.out.b"));
}

/// Incremental decoder used for search: caches projected self-attention keys
/// and values per layer, and the cross-attention keys/values of the memory.
template <typename T>
class DecoderCache {
 public:
  DecoderCache(const ModelParams<T>& p, const Tensor<T>& memory, Mask memory_pad)
      : p_(&p), memory_pad_(std::move(memory_pad)) {
    NoGradGuard ng;
    if (std::none_of(memory_pad_.begin(), memory_pad_.end(), [](auto b) { return b != 0; })) memory_pad_.clear();
    for (int l = 0; l < p.config.layers; ++l) {
      const auto pre = "dec." + std::to_string(l) + ".cross";
      cross_k_.push_back(project(p, pre, "wk", "bk", memory));
      cross_v_.push_back(project(p, pre, "wv", "bv", memory));
    }
  }

  struct State {
    std::vector<Tensor<T>> keys;    // per layer, [t, H]
    std::vector<Tensor<T>> values;  // per layer, [t, H]
    std::size_t length = 0;
  };

  State initial() const { return State{std::vector<Tensor<T>>(p_->config.layers), std::vector<Tensor<T>>(p_->config.layers), 0}; }

  /// Feeds one token at position state.length; returns next-token
  /// log-probabilities [1, V] and the extended state.
  std::pair<Tensor<T>, State> step(const State& state, int token) const {
    NoGradGuard ng;
    const auto& p = *p_;
    if (state.length >= static_cast<std::size_t>(p.config.max_len)) throw LengthError("decoder: max_len reached");
    const int ids[1] = {token};
    auto x = add(gather_rows(p.at("embed.tokens"), std::span<const int>(ids, 1)),
                 slice(p.at("embed.positions"), 0, state.length, 1));
    State next{state.keys, state.values, state.length + 1};
    for (int l = 0; l < p.config.layers; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const auto pre = "dec." + std::to_string(l);
      auto h = affine_norm(p, pre + ".ln1", x);
      auto q = project(p, pre + ".self", "wq", "bq", h);
      auto k = project(p, pre + ".self", "wk", "bk", h);
      auto v = project(p, pre + ".self", "wv", "bv", h);
      next.keys[li] = state.keys[li].defined() ? concat<T>({state.keys[li], k}, 0) : k;
      next.values[li] = state.values[li].defined() ? concat<T>({state.values[li], v}, 0) : v;
      auto a = attend(q, next.keys[li], next.values[li], {}, p.config.heads);
      x = add(x, project(p, pre + ".self", "wo", "bo", a));
      h = affine_norm(p, pre + ".ln2", x);
      q = project(p, pre + ".cross", "wq", "bq", h);
      a = attend(q, cross_k_[li], cross_v_[li], memory_pad_, p.config.heads);
      x = add(x, project(p, pre + ".cross", "wo", "bo", a));
      h = affine_norm(p, pre + ".ln3", x);
      x = add(x, feed_forward(p, pre + ".ffn", h));
    }
    x = affine_norm(p, "dec.ln_f", x);
    return {log_softmax(linear(x, p.at("dec.out.w"), p.at("dec.out.b")), 1), std::move(next)};
  }

 private:
  const ModelParams<T>* p_;
  Mask memory_pad_;
  std::vector<Tensor<T>> cross_k_, cross_v_;
};

}  // namespace retag
