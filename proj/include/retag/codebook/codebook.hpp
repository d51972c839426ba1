#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "retag/errors.hpp"
#include "retag/numerics/ops.hpp"
#include "retag/numerics/rng.hpp"
#include "retag/tables/table.hpp"

namespace retag {

/// Active reasoning categories of one forward pass (the 1_R indicator).
using CategoryMask = CategorySet;

template <typename T>
struct QuantizeResult {
  Tensor<T> quantized;        // [N, H], row n = codes[indices[n]]
  std::vector<int> indices;   // N entries in [0, K)
  std::vector<T> distances;   // Euclidean distance to the chosen code
};

/// Nearest-code lookup. The distance is evaluated directly as
/// sum((e - c)^2) and ties go to the lowest index. The quantized rows are
/// gathered from `codes`, so the codebook loss can reach the codes.
template <typename T>
QuantizeResult<T> quantize(const Tensor<T>& codes, const Tensor<T>& enc) {
  if (codes.ndim() != 2 || enc.ndim() != 2 || codes.dim(1) != enc.dim(1))
    throw DimensionError("quantize: encoder " + shape_str(enc.shape()) + " vs codebook " + shape_str(codes.shape()));
  const std::size_t n = enc.dim(0), k = codes.dim(0), h = codes.dim(1);
  auto e = enc.data();
  auto c = codes.data();
  QuantizeResult<T> out;
  out.indices.resize(n);
  out.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T best = std::numeric_limits<T>::infinity();
    int arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      T d = 0;
      for (std::size_t t = 0; t < h; ++t) {
        const T diff = e[i * h + t] - c[j * h + t];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    out.indices[i] = arg;
    out.distances[i] = std::sqrt(best);
  }
  out.quantized = gather_rows(codes, std::span<const int>(out.indices));
  return out;
}

/// Codebook tables keyed by category. With six books every category owns
/// one; with two, the five analytical categories share "analytical".
template <typename T>
class CodebookBank {
 public:
  CodebookBank() = default;
  CodebookBank(int count, std::vector<Tensor<T>> books) : count_(count), books_(std::move(books)) {
    if (count_ != 2 && count_ != 6) throw ConfigError("codebook bank: count must be 2 or 6");
    if (books_.size() != static_cast<std::size_t>(count_))
      throw ContractError("codebook bank: expected " + std::to_string(count_) + " codebooks");
    for (const auto& b : books_) {
      if (b.ndim() != 2 || b.dim(0) < 2) throw DimensionError("codebook bank: each codebook needs K >= 2 rows");
      if (b.dim(1) != books_.front().dim(1)) throw DimensionError("codebook bank: codebooks differ in width");
    }
  }

  static std::vector<std::string> book_names(int count) {
    if (count == 2) return {"analytical", "descriptive"};
    std::vector<std::string> names;
    for (auto c : kAllCategories) names.emplace_back(category_name(c));
    return names;
  }

  static std::size_t book_for(int count, Category c) {
    if (count == 6) return static_cast<std::size_t>(c);
    return c == Category::Descriptive ? 1 : 0;
  }

  /// Uniform(-1/K, 1/K) codes.
  static Tensor<T> init_codes(std::size_t k, std::size_t h, Rng& rng) {
    std::vector<T> v(k * h);
    const double bound = 1.0 / static_cast<double>(k);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>({k, h}, std::move(v), true);
  }

  int count() const { return count_; }
  std::size_t width() const { return books_.front().dim(1); }
  std::size_t book_index(Category c) const { return book_for(count_, c); }
  const Tensor<T>& book(Category c) const { return books_[book_index(c)]; }
  const std::vector<Tensor<T>>& books() const { return books_; }

 private:
  int count_ = 6;
  std::vector<Tensor<T>> books_;
};

template <typename T>
struct MixResult {
  Tensor<T> mixed;
  // Per codebook actually consulted, in book order.
  std::vector<std::pair<std::size_t, QuantizeResult<T>>> parts;
};

namespace detail {
template <typename T>
constexpr T weight_tolerance() {
  return std::is_same_v<T, float> ? T(1e-4) : T(1e-9);
}
}  // namespace detail

/// Weighted sum of per-category quantizations restricted to the mask.
/// `weights` holds six entries: zero on inactive categories, summing to one
/// over active ones.
template <typename T>
MixResult<T> mix(const CodebookBank<T>& bank, const Tensor<T>& enc, CategoryMask mask, const Tensor<T>& weights) {
  if (mask.empty()) throw ContractError("mix: empty category mask");
  if (!mask.valid()) throw ContractError("mix: descriptive must be the only active category");
  if (weights.numel() != kNumCategories)
    throw DimensionError("mix: expected 6 weights, got shape " + shape_str(weights.shape()));
  T active_total = 0;
  for (auto c : kAllCategories) {
    const T w = weights[static_cast<std::size_t>(c)];
    if (mask.contains(c)) {
      if (w < 0) throw ContractError("mix: negative weight for " + std::string(category_name(c)));
      active_total += w;
    } else if (w != T(0)) {
      throw ContractError("mix: inactive category " + std::string(category_name(c)) + " has non-zero weight");
    }
  }
  if (std::abs(active_total - T(1)) > detail::weight_tolerance<T>())
    throw ContractError("mix: active weights sum to " + std::to_string(active_total));

  std::map<std::size_t, std::vector<Category>> by_book;
  for (auto c : mask.members()) by_book[bank.book_index(c)].push_back(c);

  MixResult<T> out;
  for (auto& [book, cats] : by_book) {
    Tensor<T> w;
    for (auto c : cats) {
      const auto idx = static_cast<std::size_t>(c);
      auto wc = weights.ndim() == 1 ? slice(weights, 0, idx, 1) : slice(weights, -1, idx, 1);
      w = w.defined() ? add(w, wc) : wc;
    }
    auto q = quantize(bank.books()[book], enc);
    auto term = mul(q.quantized, w);
    out.mixed = out.mixed.defined() ? add(out.mixed, term) : term;
    out.parts.emplace_back(book, std::move(q));
  }
  return out;
}

/// Codebook loss mean((sg(enc) - mixed)^2) and commitment loss
/// beta * mean((enc - sg(mixed))^2).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> vq_losses(const Tensor<T>& enc, const Tensor<T>& mixed, T beta) {
  if (enc.shape() != mixed.shape())
    throw DimensionError("vq_losses: shape mismatch " + shape_str(enc.shape()) + " vs " + shape_str(mixed.shape()));
  auto d_book = sub(stop_gradient(enc), mixed);
  auto codebook_loss = mean(mul(d_book, d_book));
  auto d_commit = sub(enc, stop_gradient(mixed));
  auto commitment_loss = scale(mean(mul(d_commit, d_commit)), beta);
  return {codebook_loss, commitment_loss};
}

/// enc + sg(mixed - enc), fused: the forward value is exactly `mixed` and the
/// upstream gradient is copied to `enc` unchanged; nothing reaches `mixed`.
template <typename T>
Tensor<T> straight_through(const Tensor<T>& enc, const Tensor<T>& mixed) {
  if (enc.shape() != mixed.shape())
    throw DimensionError("straight_through: shape mismatch " + shape_str(enc.shape()) + " vs " +
                         shape_str(mixed.shape()));
  std::vector<T> out(mixed.data().begin(), mixed.data().end());
  if (detail::frozen_values<T>().mode != detail::FreezeMode::Off) {
    // Under a freeze scope the offset mixed - enc is the stop-gradient value.
    auto e = enc.data();
    std::vector<T> offset(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) offset[i] = out[i] - e[i];
    const bool replay = detail::replaying_frozen<T>();
    offset = detail::frozen_or_live(std::move(offset));
    if (replay)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = e[i] + offset[i];
  }
  return record_op<T>("straight_through", mixed.shape(), std::move(out), {&enc}, [](Node<T>& o) {
    if (auto* ge = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ge)[i] += o.grad[i];
  });
}

/// Per-code selection counts (diagnostics only).
inline std::vector<std::size_t> code_usage(const std::vector<int>& indices, std::size_t k) {
  std::vector<std::size_t> hist(k, 0);
  for (int i : indices)
    if (i >= 0 && static_cast<std::size_t>(i) < k) ++hist[static_cast<std::size_t>(i)];
  return hist;
}

}  // namespace retag
