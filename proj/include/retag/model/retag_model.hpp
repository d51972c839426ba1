#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retag/codebook/codebook.hpp"
#include "retag/model/transformer.hpp"
#include "retag/tables/linearize.hpp"
#include "retag/tables/vocab.hpp"

namespace retag {

/// One tokenized training/evaluation example.
struct EncodedExample {
  std::vector<int> input_ids;      // <bos> question + table <eos>
  std::vector<int> decoder_input;  // <bos> reference
  std::vector<int> target;         // reference <eos>
  CategorySet categories;          // drives the codebook mask
  bool analytical = false;         // gold kind, CI target
};

/// Tokenizes an instance for a strategy. `tags` overrides the categories
/// used for the question and the codebook mask (random-tag evaluation);
/// the gold kind is kept.
inline EncodedExample encode_example(const Vocab& vocab, const Instance& inst, Strategy strategy,
                                     std::optional<CategorySet> tags = std::nullopt) {
  EncodedExample ex;
  ex.categories = tags.value_or(inst.categories);
  ex.analytical = inst.analytical();
  ex.input_ids = vocab.encode(build_input(build_question(strategy, ex.categories), linearize(inst.table, inst.highlights)));
  auto ref = vocab.encode(inst.reference);
  ex.decoder_input.assign(ref.begin(), ref.end() - 1);
  ex.target.assign(ref.begin() + 1, ref.end());
  return ex;
}

template <typename T>
struct ForwardOutput {
  Tensor<T> enc;              // E(x), [N, H]
  Tensor<T> fused;            // u, [N, H] (equals enc without codebooks)
  Tensor<T> logits;           // [T_out, V]; undefined when the decoder is skipped
  Tensor<T> ci_logits;        // [1, 2] = [descriptive, analytical]
  Tensor<T> codebook_loss;    // scalar
  Tensor<T> commitment_loss;  // scalar, beta applied
  Tensor<T> weights;          // [1, 6], masked distribution under ReTAG, zeros otherwise
  std::vector<std::vector<int>> code_indices;  // per consulted codebook
};

/// [1, N] averaging row over non-pad positions.
template <typename T>
Tensor<T> mean_pool(const Tensor<T>& x, std::span<const std::uint8_t> pad_mask) {
  const std::size_t n = x.dim(0);
  std::size_t live = 0;
  for (std::size_t i = 0; i < n; ++i) live += pad_mask.empty() || !pad_mask[i];
  if (live == 0) throw ContractError("mean_pool: every position is padding");
  std::vector<T> w(n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    if (pad_mask.empty() || !pad_mask[i]) w[i] = T(1) / static_cast<T>(live);
  return matmul(Tensor<T>({1, n}, std::move(w)), x);
}

/// Category weights w^i: mean-pooled encoder state through the weight head,
/// softmax over the active categories only (inactive entries exactly 0).
template <typename T>
Tensor<T> predict_weights(const ModelParams<T>& p, const Tensor<T>& enc, std::span<const std::uint8_t> pad_mask,
                          CategoryMask mask) {
  if (mask.empty()) throw ContractError("predict_weights: empty category mask");
  auto scores = linear(mean_pool(enc, pad_mask), p.at("weight_head.w"), p.at("weight_head.b"));
  std::vector<std::uint8_t> inactive(kNumCategories);
  for (auto c : kAllCategories) inactive[static_cast<std::size_t>(c)] = !mask.contains(c);
  scores = masked_fill(scores, std::span<const std::uint8_t>(inactive), -std::numeric_limits<T>::infinity());
  return softmax(scores, 1);
}

/// u = straight-through quantized + E(x)
template <typename T>
Tensor<T> fuse(const Tensor<T>& enc, const Tensor<T>& st_quantized) {
  if (enc.shape() != st_quantized.shape())
    throw DimensionError("fuse: shape mismatch " + shape_str(enc.shape()) + " vs " + shape_str(st_quantized.shape()));
  return add(st_quantized, enc);
}

/// Analytical/descriptive logits [descriptive, analytical] from mean-pooled u.
template <typename T>
Tensor<T> classify_ci(const ModelParams<T>& p, const Tensor<T>& u, std::span<const std::uint8_t> pad_mask) {
  return linear(mean_pool(u, pad_mask), p.at("ci.w"), p.at("ci.b"));
}

/// Forward pass of one example under `strategy`.
///
/// NoTags/Tags decode directly from E(x). ReTAG quantizes E(x) against the
/// active codebooks, mixes them with the predicted weights, passes the mix
/// through the straight-through estimator, adds the residual and decodes
/// from u. The weight head reads sg(E(x)), so the codebook loss never
/// reaches encoder parameters. With `run_decoder` false the decoder is
/// skipped (first pretraining stage).
template <typename T>
ForwardOutput<T> forward_train(const ModelParams<T>& p, const EncodedExample& ex, Strategy strategy, T beta,
                               Rng* drop = nullptr, bool run_decoder = true) {
  const Mask pad = padding_mask(ex.input_ids);
  ForwardOutput<T> out;
  out.enc = encode(p, std::span<const int>(ex.input_ids), std::span<const std::uint8_t>(pad), drop);
  out.fused = out.enc;
  if (strategy == Strategy::ReTAG) {
    out.weights = predict_weights(p, stop_gradient(out.enc), pad, ex.categories);
    auto mixed = mix(p.bank(), out.enc, ex.categories, out.weights);
    for (auto& [_, q] : mixed.parts) out.code_indices.push_back(q.indices);
    auto [cb, commit] = vq_losses(out.enc, mixed.mixed, beta);
    out.codebook_loss = cb;
    out.commitment_loss = commit;
    out.fused = fuse(out.enc, straight_through(out.enc, mixed.mixed));
  } else {
    out.weights = Tensor<T>::zeros({1, kNumCategories});
    out.codebook_loss = Tensor<T>::scalar(T(0));
    out.commitment_loss = Tensor<T>::scalar(T(0));
  }
  out.ci_logits = classify_ci(p, out.fused, pad);
  if (run_decoder)
    out.logits = decode(p, std::span<const int>(ex.decoder_input), out.fused, std::span<const std::uint8_t>(pad), drop);
  return out;
}

/// Memory the decoder attends to at inference time (no graph recorded).
template <typename T>
Tensor<T> inference_memory(const ModelParams<T>& p, std::span<const int> input_ids, Strategy strategy,
                           CategoryMask mask) {
  NoGradGuard ng;
  const Mask pad = padding_mask(input_ids);
  auto enc = encode(p, input_ids, std::span<const std::uint8_t>(pad));
  if (strategy != Strategy::ReTAG) return enc;
  auto w = predict_weights(p, enc, pad, mask);
  auto mixed = mix(p.bank(), enc, mask, w);
  return fuse(enc, straight_through(enc, mixed.mixed));
}

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, without <bos>/<eos>
  double log_prob = 0;
  bool finished = false;
};

namespace detail {

template <typename T>
Hypothesis beam_search_width(const DecoderCache<T>& cache, int width, int max_len) {
  using State = typename DecoderCache<T>::State;
  struct Live {
    std::vector<int> tokens;
    double score;
    State state;
  };
  std::vector<Live> beam;
  beam.push_back({{}, 0.0, cache.initial()});
  std::optional<Hypothesis> best;
  auto offer = [&](Hypothesis h) {
    if (!best || h.log_prob > best->log_prob) best = std::move(h);
  };
  for (int step = 0; step < max_len && !beam.empty(); ++step) {
    struct Cand {
      double score;
      std::size_t from;
      int token;
    };
    std::vector<Cand> cands;
    std::vector<State> states;
    states.reserve(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const int prev = beam[b].tokens.empty() ? Vocab::kBos : beam[b].tokens.back();
      auto [logp, st] = cache.step(beam[b].state, prev);
      states.push_back(std::move(st));
      auto lp = logp.data();
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const int tok = static_cast<int>(v);
        // <pad>, <bos> and <unk> are never emitted.
        if (tok == Vocab::kPad || tok == Vocab::kBos || tok == Vocab::kUnk) continue;
        cands.push_back({beam[b].score + static_cast<double>(lp[v]), b, tok});
      }
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(width), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.from != b.from) return a.from < b.from;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      auto tokens = beam[c.from].tokens;
      if (c.token == Vocab::kEos) {
        offer({std::move(tokens), c.score, true});
        continue;
      }
      tokens.push_back(c.token);
      if (static_cast<int>(tokens.size()) >= max_len) {
        offer({std::move(tokens), c.score, false});
        continue;
      }
      next.push_back({std::move(tokens), c.score, states[c.from]});
    }
    beam = std::move(next);
    // Scores only decrease as hypotheses grow, so once the best finished
    // hypothesis beats every live one the search is over.
    if (best && std::all_of(beam.begin(), beam.end(), [&](const Live& l) { return l.score <= best->log_prob; })) break;
  }
  for (auto& l : beam) offer({l.tokens, l.score, false});
  return best.value_or(Hypothesis{});
}

}  // namespace detail

/// Beam search maximizing the summed token log-probability (no length
/// normalization). A hypothesis ends at <eos> or after max_len tokens.
/// The result is the best hypothesis over beam widths 1..beam, so the
/// returned log-probability never decreases as the beam widens.
template <typename T>
Hypothesis generate(const ModelParams<T>& p, std::span<const int> input_ids, Strategy strategy, CategoryMask mask,
                    int beam, int max_len) {
  if (beam < 1) throw ConfigError("generate: beam must be >= 1");
  if (max_len < 1) throw ConfigError("generate: max_len must be >= 1");
  max_len = std::min(max_len, p.config.max_len - 1);
  NoGradGuard ng;
  const auto memory = inference_memory(p, input_ids, strategy, mask);
  const DecoderCache<T> cache(p, memory, padding_mask(input_ids));
  Hypothesis best = detail::beam_search_width(cache, 1, max_len);
  for (int w = 2; w <= beam; ++w) {
    auto h = detail::beam_search_width(cache, w, max_len);
    if (h.log_prob > best.log_prob) best = std::move(h);
  }
  return best;
}

}  // namespace retag
