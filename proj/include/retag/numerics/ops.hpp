#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "retag/numerics/tensor.hpp"

// Differentiable primitives. All tensors are row-major; binary elementwise ops
// broadcast the smaller operand over leading axes only (its shape must be a
// suffix of the other's, or it must hold a single value).

namespace retag {

namespace detail {

template <typename T>
std::vector<T>* grad_of(Node<T>& out, std::size_t i) {
  auto& p = *out.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
Shape broadcast_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1 || is_suffix(b.shape(), a.shape())) return a.shape();
  if (a.numel() == 1 || is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

inline std::size_t normalize_axis(const char* op, int axis, std::size_t ndim) {
  const int n = static_cast<int>(ndim);
  if (axis < -n || axis >= n)
    throw RangeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  return static_cast<std::size_t>(axis < 0 ? axis + n : axis);
}

// (outer, axis length, inner) decomposition of a shape around one axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,K] += A[M,N] * B[K,N]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Da da, Db db) {
  Shape shape = broadcast_shape(op, a, b);
  const std::size_t n = shape_numel(shape);
  const std::size_t na = a.numel(), nb = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i % na], bd[i % nb]);
  }
  return record_op<T>(op, std::move(shape), std::move(out), {&a, &b}, [=](Node<T>& o) {
    const auto& g = o.grad;
    const auto& av = o.parents[0]->data;
    const auto& bv = o.parents[1]->data;
    if (auto* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < n; ++i) (*ga)[i % na] += da(g[i], av[i % na], bv[i % nb]);
    if (auto* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < n; ++i) (*gb)[i % nb] += db(g[i], av[i % na], bv[i % nb]);
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return record_op<T>("scale", a.shape(), std::move(out), {&a}, [factor](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += factor * o.grad[i];
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op<T>("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& o) {
    const T* g = o.grad.data();
    if (auto* ga = detail::grad_of(o, 0))  // dA = dC * B^T
      detail::gemm_nt(g, o.parents[1]->data.data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(o, 1))  // dB = A^T * dC
      detail::gemm_tn(o.parents[0]->data.data(), g, gb->data(), m, k, n);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.ndim() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return record_op<T>("transpose", {n, m}, std::move(out), {&a}, [m, n](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += o.grad[j * m + i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = detail::normalize_axis("concat", axis, first.size());
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& p : parts) {
    bool ok = p.ndim() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) ok = d == ax || p.dim(d) == first[d];
    if (!ok)
      throw DimensionError("concat: shape mismatch " + shape_str(first) + " and " + shape_str(p.shape()));
    shape[ax] += p.dim(ax);
  }
  const auto view = detail::axis_view(shape, ax);
  std::vector<T> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.dim(ax) * view.inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < view.outer; ++o)
      std::copy_n(pd.begin() + o * chunk, chunk, out.begin() + o * view.len * view.inner + off);
    off += chunk;
  }
  return record_op_n<T>("concat", shape, std::move(out), parts, [view, offsets](Node<T>& o) {
    for (std::size_t i = 0; i < o.parents.size(); ++i) {
      auto* gp = detail::grad_of(o, i);
      if (!gp) continue;
      const std::size_t chunk = o.parents[i]->data.size() / view.outer;
      for (std::size_t r = 0; r < view.outer; ++r)
        for (std::size_t j = 0; j < chunk; ++j)
          (*gp)[r * chunk + j] += o.grad[r * view.len * view.inner + offsets[i] + j];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = detail::normalize_axis("slice", axis, a.ndim());
  if (length == 0 || start + length > a.dim(ax))
    throw RangeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis of size " + std::to_string(a.dim(ax)));
  Shape shape = a.shape();
  shape[ax] = length;
  const auto view = detail::axis_view(a.shape(), ax);
  const std::size_t chunk = length * view.inner;
  std::vector<T> out(shape_numel(shape));
  auto ad = a.data();
  for (std::size_t o = 0; o < view.outer; ++o)
    std::copy_n(ad.begin() + (o * view.len + start) * view.inner, chunk, out.begin() + o * chunk);
  return record_op<T>("slice", std::move(shape), std::move(out), {&a}, [view, start, chunk](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (std::size_t r = 0; r < view.outer; ++r)
        for (std::size_t j = 0; j < chunk; ++j)
          (*ga)[(r * view.len + start) * view.inner + j] += o.grad[r * chunk + j];
  });
}

/// Selects rows of a [V, H] table; used for embeddings and code lookup.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids) {
  if (table.ndim() != 2) throw DimensionError("gather_rows: expected rank-2 table, got " + shape_str(table.shape()));
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  const std::size_t v = table.dim(0), h = table.dim(1);
  std::vector<T> out(ids.size() * h);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw RangeError("gather_rows: index " + std::to_string(ids[i]) + " outside [0, " + std::to_string(v) + ")");
    std::copy_n(td.begin() + ids[i] * h, h, out.begin() + i * h);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return record_op<T>("gather_rows", {ids.size(), h}, std::move(out), {&table}, [idx, h](Node<T>& o) {
    if (auto* gt = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < h; ++j) (*gt)[idx[i] * h + j] += o.grad[i * h + j];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return record_op<T>("sum", {1}, {acc}, {&a}, [](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (auto& g : *ga) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const T inv = T(1) / static_cast<T>(a.numel());
  T acc = 0;
  for (T v : a.data()) acc += v;
  return record_op<T>("mean", {1}, {acc * inv}, {&a}, [inv](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (auto& g : *ga) g += o.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis = -1) {
  const std::size_t ax = detail::normalize_axis("softmax", axis, a.ndim());
  const auto v = detail::axis_view(a.shape(), ax);
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < v.len; ++k) mx = std::max(mx, ad[base + k * v.inner]);
      T total = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const T e = std::exp(ad[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < v.len; ++k) out[base + k * v.inner] /= total;
    }
  return record_op<T>("softmax", a.shape(), std::move(out), {&a}, [v](Node<T>& o) {
    auto* ga = detail::grad_of(o, 0);
    if (!ga) return;
    const auto& y = o.data;
    for (std::size_t r = 0; r < v.outer; ++r)
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = r * v.len * v.inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < v.len; ++k) dot += o.grad[base + k * v.inner] * y[base + k * v.inner];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t i = base + k * v.inner;
          (*ga)[i] += y[i] * (o.grad[i] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, int axis = -1) {
  const std::size_t ax = detail::normalize_axis("log_softmax", axis, a.ndim());
  const auto v = detail::axis_view(a.shape(), ax);
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < v.len; ++k) mx = std::max(mx, ad[base + k * v.inner]);
      T total = 0;
      for (std::size_t k = 0; k < v.len; ++k) total += std::exp(ad[base + k * v.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t k = 0; k < v.len; ++k) out[base + k * v.inner] = ad[base + k * v.inner] - lse;
    }
  return record_op<T>("log_softmax", a.shape(), std::move(out), {&a}, [v](Node<T>& o) {
    auto* ga = detail::grad_of(o, 0);
    if (!ga) return;
    const auto& y = o.data;
    for (std::size_t r = 0; r < v.outer; ++r)
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = r * v.len * v.inner + in;
        T gsum = 0;
        for (std::size_t k = 0; k < v.len; ++k) gsum += o.grad[base + k * v.inner];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t i = base + k * v.inner;
          (*ga)[i] += o.grad[i] - std::exp(y[i]) * gsum;
        }
      }
  });
}

/// Normalizes over the last axis (no affine part).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, T eps = T(1e-5)) {
  const std::size_t h = a.shape().back();
  const std::size_t rows = a.numel() / h;
  std::vector<T> out(a.numel());
  std::vector<T> inv_std(rows);
  auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = ad.data() + r * h;
    T mu = 0;
    for (std::size_t j = 0; j < h; ++j) mu += x[j];
    mu /= static_cast<T>(h);
    T var = 0;
    for (std::size_t j = 0; j < h; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<T>(h);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < h; ++j) out[r * h + j] = (x[j] - mu) * is;
  }
  return record_op<T>("layer_norm", a.shape(), std::move(out), {&a}, [h, rows, inv_std](Node<T>& o) {
    auto* ga = detail::grad_of(o, 0);
    if (!ga) return;
    const auto& xh = o.data;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = o.grad.data() + r * h;
      const T* y = xh.data() + r * h;
      T mg = 0, mgy = 0;
      for (std::size_t j = 0; j < h; ++j) {
        mg += g[j];
        mgy += g[j] * y[j];
      }
      mg /= static_cast<T>(h);
      mgy /= static_cast<T>(h);
      for (std::size_t j = 0; j < h; ++j) (*ga)[r * h + j] += inv_std[r] * (g[j] - mg - y[j] * mgy);
    }
  });
}

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * ad[i] * (T(1) + std::erf(ad[i] * inv_sqrt2));
  return record_op<T>("gelu", a.shape(), std::move(out), {&a}, [](Node<T>& o) {
    auto* ga = detail::grad_of(o, 0);
    if (!ga) return;
    constexpr T inv_sqrt2pi = T(1) / (std::numbers::sqrt2_v<T> * T(1.7724538509055160273));
    const auto& x = o.parents[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
      (*ga)[i] += o.grad[i] * (cdf + x[i] * pdf);
    }
  });
}

/// Replaces entries where mask is non-zero. The mask repeats with period
/// mask.size(), which must divide numel (broadcast over leading axes).
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, std::span<const std::uint8_t> mask, T value) {
  if (mask.empty() || a.numel() % mask.size() != 0)
    throw DimensionError("masked_fill: mask of size " + std::to_string(mask.size()) +
                         " does not tile shape " + shape_str(a.shape()));
  std::vector<T> out(a.data().begin(), a.data().end());
  const std::size_t period = mask.size();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i % period]) out[i] = value;
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return record_op<T>("masked_fill", a.shape(), std::move(out), {&a}, [m, period](Node<T>& o) {
    if (auto* ga = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        if (!m[i % period]) (*ga)[i] += o.grad[i];
  });
}

/// Mean token cross-entropy of [T, V] logits; rows whose target equals
/// ignore_index contribute nothing. All-ignored input yields 0.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets, int ignore_index = -100) {
  if (logits.ndim() != 2 || logits.dim(0) != targets.size())
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  auto ld = logits.data();
  std::vector<T> probs(rows * v, T(0));
  T total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v)
      throw RangeError("cross_entropy: target " + std::to_string(targets[r]) + " outside vocabulary of " +
                       std::to_string(v));
    const T* x = ld.data() + r * v;
    T mx = *std::max_element(x, x + v);
    T z = 0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(x[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] = std::exp(x[j] - lse);
    total += lse - x[targets[r]];
    ++count;
  }
  const T inv = count ? T(1) / static_cast<T>(count) : T(0);
  std::vector<int> tg(targets.begin(), targets.end());
  return record_op<T>("cross_entropy", {1}, {total * inv}, {&logits},
                      [probs = std::move(probs), tg, rows, v, inv, ignore_index](Node<T>& o) {
                        auto* gl = detail::grad_of(o, 0);
                        if (!gl) return;
                        const T g = o.grad[0] * inv;
                        for (std::size_t r = 0; r < rows; ++r) {
                          if (tg[r] == ignore_index) continue;
                          for (std::size_t j = 0; j < v; ++j) (*gl)[r * v + j] += g * probs[r * v + j];
                          (*gl)[r * v + tg[r]] -= g;
                        }
                      });
}

namespace detail {

// Stop-gradient outputs can be pinned to recorded values so that a function
// containing them becomes an ordinary function whose derivative equals its
// autodiff gradient. Used by finite-difference checking only.
enum class FreezeMode { Off, Record, Replay };

template <typename T>
struct FrozenValues {
  FreezeMode mode = FreezeMode::Off;
  std::vector<std::vector<T>> values;
  std::size_t cursor = 0;
};

template <typename T>
FrozenValues<T>& frozen_values() {
  thread_local FrozenValues<T> f;
  return f;
}

template <typename T>
bool replaying_frozen() {
  return frozen_values<T>().mode == FreezeMode::Replay;
}

// Returns `live` unchanged, recording it or substituting the recorded value
// depending on the active mode.
template <typename T>
std::vector<T> frozen_or_live(std::vector<T> live) {
  auto& f = frozen_values<T>();
  if (f.mode == FreezeMode::Record) {
    f.values.push_back(live);
  } else if (f.mode == FreezeMode::Replay) {
    if (f.cursor >= f.values.size() || f.values[f.cursor].size() != live.size())
      throw ContractError("frozen stop-gradient replay diverged from the recorded graph");
    return f.values[f.cursor++];
  }
  return live;
}

}  // namespace detail

/// Scope that records (then replays) every stop-gradient value computed on
/// this thread.
template <typename T>
class FreezeStopGradients {
 public:
  FreezeStopGradients() {
    auto& f = detail::frozen_values<T>();
    if (f.mode != detail::FreezeMode::Off) throw ContractError("FreezeStopGradients scopes do not nest");
    f = {detail::FreezeMode::Record, {}, 0};
  }
  ~FreezeStopGradients() { detail::frozen_values<T>() = {}; }
  FreezeStopGradients(const FreezeStopGradients&) = delete;
  FreezeStopGradients& operator=(const FreezeStopGradients&) = delete;

  /// Switches to replay and rewinds to the first recorded value.
  void replay() {
    auto& f = detail::frozen_values<T>();
    f.mode = detail::FreezeMode::Replay;
    f.cursor = 0;
  }
};

/// Identity in the forward pass, zero gradient in the backward pass.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  Tensor<T> out(x.shape(), detail::frozen_or_live(std::vector<T>(x.data().begin(), x.data().end())));
  out.node()->op = "stop_gradient";
  return out;
}

}  // namespace retag
