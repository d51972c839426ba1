#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "retag/codebook/codebook.hpp"
#include "retag/model/retag_model.hpp"
#include "retag/numerics/gradcheck.hpp"
#include "retag/numerics/ops.hpp"
#include "retag/trainer/trainer.hpp"

// Finite-difference verification suite shared by `retag gradcheck` and the
// test binaries. Everything runs in double precision.

namespace retag {

struct VerificationResult {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool passed = false;
  std::string detail;
};

struct VerificationOptions {
  double h = 1e-5;
  double primitive_tol = 1e-6;
  double model_tol = 1e-5;
  std::uint64_t seed = 2024;
  int max_resamples = 20;
};

namespace verify {

using D = double;

inline Tensor<D> random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1, bool grad = true) {
  std::vector<D> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<D>(std::move(shape), std::move(v), grad);
}

// Contracts an output with fixed random weights so every element matters.
inline Tensor<D> probe_sum(const Tensor<D>& y, Rng& rng) {
  auto w = random_tensor(rng, y.shape(), -1, 1, false);
  return sum(mul(y, w));
}

inline VerificationResult run_check(const std::string& name, NamedParams params,
                                    const std::function<Tensor<D>(const NamedParams&)>& body, double h, double tol) {
  VerificationResult r{name, 0, tol, false, ""};
  try {
    auto rep = grad_check([&] { return body(params); }, params, h, tol);
    r.max_rel_err = rep.max_rel_err();
    r.passed = rep.passed();
    if (!r.passed)
      for (const auto& e : rep.entries)
        if (!e.passed) r.detail += e.name + " rel " + std::to_string(e.max_rel_err) + "; ";
  } catch (const Error& e) {
    r.detail = e.what();
  }
  return r;
}

}  // namespace verify

/// Every differentiable primitive against central differences.
inline std::vector<VerificationResult> verify_primitives(const VerificationOptions& o = {}) {
  using namespace verify;
  Rng rng(o.seed, "verify");
  std::vector<VerificationResult> out;
  auto check = [&](const std::string& name, NamedParams ps, auto body) {
    const auto w_seed = rng.next_u64();
    out.push_back(run_check(
        name, std::move(ps),
        [&, w_seed, body](const NamedParams& p) {
          Rng wr(w_seed, "weights");
          return probe_sum(body(p), wr);
        },
        o.h, o.primitive_tol));
  };

  check("add (broadcast)", {{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {4})}},
        [](const NamedParams& p) { return add(p[0].second, p[1].second); });
  check("sub", {{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {3, 4})}},
        [](const NamedParams& p) { return sub(p[0].second, p[1].second); });
  check("mul (broadcast)", {{"a", random_tensor(rng, {2, 3, 4})}, {"b", random_tensor(rng, {3, 4})}},
        [](const NamedParams& p) { return mul(p[0].second, p[1].second); });
  check("scale", {{"a", random_tensor(rng, {5})}}, [](const NamedParams& p) { return scale(p[0].second, 1.7); });
  check("matmul", {{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {4, 2})}},
        [](const NamedParams& p) { return matmul(p[0].second, p[1].second); });
  check("transpose", {{"a", random_tensor(rng, {3, 5})}}, [](const NamedParams& p) { return transpose(p[0].second); });
  check("concat", {{"a", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {2, 2})}},
        [](const NamedParams& p) { return concat<D>({p[0].second, p[1].second}, 1); });
  check("slice", {{"a", random_tensor(rng, {4, 5})}}, [](const NamedParams& p) { return slice(p[0].second, 1, 1, 3); });
  check("gather_rows", {{"table", random_tensor(rng, {5, 3})}}, [](const NamedParams& p) {
    const int ids[4] = {4, 0, 4, 2};
    return gather_rows(p[0].second, std::span<const int>(ids, 4));
  });
  check("sum", {{"a", random_tensor(rng, {3, 3})}}, [](const NamedParams& p) { return sum(p[0].second); });
  check("mean", {{"a", random_tensor(rng, {3, 3})}}, [](const NamedParams& p) { return mean(p[0].second); });
  check("softmax", {{"a", random_tensor(rng, {3, 5}, -2, 2)}}, [](const NamedParams& p) { return softmax(p[0].second, 1); });
  check("softmax axis 0", {{"a", random_tensor(rng, {4, 3}, -2, 2)}},
        [](const NamedParams& p) { return softmax(p[0].second, 0); });
  check("log_softmax", {{"a", random_tensor(rng, {3, 5}, -2, 2)}},
        [](const NamedParams& p) { return log_softmax(p[0].second, 1); });
  check("layer_norm", {{"a", random_tensor(rng, {3, 6}, -2, 2)}},
        [](const NamedParams& p) { return layer_norm(p[0].second, 1e-5); });
  check("gelu", {{"a", random_tensor(rng, {12}, -3, 3)}}, [](const NamedParams& p) { return gelu(p[0].second); });
  check("masked_fill", {{"a", random_tensor(rng, {3, 4})}}, [](const NamedParams& p) {
    static const std::uint8_t mask[4] = {0, 1, 0, 1};
    return masked_fill(p[0].second, std::span<const std::uint8_t>(mask, 4), -3.0);
  });
  check("cross_entropy (ignore index)", {{"logits", random_tensor(rng, {4, 6}, -2, 2)}}, [](const NamedParams& p) {
    const int targets[4] = {1, 0, -100, 5};
    return cross_entropy(p[0].second, std::span<const int>(targets, 4));
  });
  check("stop_gradient branch", {{"x", random_tensor(rng, {2, 3})}}, [](const NamedParams& p) {
    const auto& x = p[0].second;
    return add(mul(stop_gradient(x), x), x);
  });
  check("straight_through + residual", {{"enc", random_tensor(rng, {2, 3})}, {"codes", random_tensor(rng, {4, 3})}},
        [](const NamedParams& p) {
          const auto q = quantize(p[1].second, p[0].second);
          return add(straight_through(p[0].second, q.quantized), p[0].second);
        });
  check("vq losses", {{"enc", random_tensor(rng, {3, 4})}, {"codes", random_tensor(rng, {5, 4})}},
        [](const NamedParams& p) {
          const auto q = quantize(p[1].second, p[0].second);
          auto [cb, commit] = vq_losses(p[0].second, q.quantized, 0.25);
          return concat<D>({cb, commit}, 0);
        });
  check("attention", {{"q", random_tensor(rng, {3, 4})}, {"k", random_tensor(rng, {5, 4})}, {"v", random_tensor(rng, {5, 4})}},
        [](const NamedParams& p) {
          static const std::uint8_t pad[5] = {0, 0, 0, 0, 1};
          return attend(p[0].second, p[1].second, p[2].second, std::span<const std::uint8_t>(pad, 5), 2);
        });

  // Negative control: a matmul whose backward drops a factor must be caught.
  {
    NamedParams ps{{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {4, 2})}};
    auto broken = [](const NamedParams& p) {
      const auto& a = p[0].second;
      const auto& b = p[1].second;
      auto good = matmul(a, b);
      std::vector<D> v(good.data().begin(), good.data().end());
      return record_op<D>("broken_matmul", good.shape(), std::move(v), {&a, &b}, [](Node<D>& o) {
        if (auto* ga = detail::grad_of(o, 0))
          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += 0.5 * o.grad[i % o.grad.size()];
        detail::grad_of(o, 1);
      });
    };
    auto r = run_check("negative control (corrupted matmul backward)", std::move(ps),
                       [&](const NamedParams& p) { return sum(broken(p)); }, o.h, o.primitive_tol);
    r.passed = !r.passed;
    r.detail = r.passed ? "corruption detected" : "corruption NOT detected";
    out.push_back(r);
  }
  return out;
}

/// Tiny ReTAG model (H=8, K=4, 2 layers, 64-bit): gradients of the full
/// four-term loss w.r.t. every parameter. A sample whose perturbation moves
/// any code index is rejected and the model is re-initialized.
inline VerificationResult verify_model(const VerificationOptions& o = {}, int codebook_count = 6) {
  ModelConfig mc;
  mc.layers = 2;
  mc.heads = 2;
  mc.hidden = 8;
  mc.ffn = 16;
  mc.vocab_size = 16;
  mc.max_len = 16;
  mc.codebook_size = 4;
  mc.codebook_count = codebook_count;
  mc.strategy = Strategy::ReTAG;

  std::vector<EncodedExample> batch(2);
  batch[0].input_ids = {1, 6, 9, 4, 12, 5, 7, 2};
  batch[0].decoder_input = {1, 8, 10, 11};
  batch[0].target = {8, 10, 11, 2};
  batch[0].categories = {Category::Numerical, Category::Temporal};
  batch[0].analytical = true;
  batch[1].input_ids = {1, 13, 4, 14, 5, 15, 2, 0};
  batch[1].decoder_input = {1, 14, 15};
  batch[1].target = {14, 15, 2};
  batch[1].categories = CategorySet::descriptive();
  batch[1].analytical = false;

  const std::string name = "end-to-end ReTAG loss (" + std::to_string(codebook_count) + " codebooks)";
  for (int attempt = 0; attempt <= o.max_resamples; ++attempt) {
    auto p = ModelParams<double>::init(mc, o.seed + static_cast<std::uint64_t>(attempt));
    // Spread the codes so quantization is not decided by a hair.
    Rng spread(o.seed + static_cast<std::uint64_t>(attempt), "verify-codes");
    for (auto& [n, t] : p.tensors)
      if (n.rfind("codebook.", 0) == 0)
        for (auto& x : t.mutable_data()) x = spread.uniform(-1, 1);
    NamedParams params(p.tensors.begin(), p.tensors.end());
    std::vector<std::vector<int>> base, last;
    bool have_base = false;
    auto f = [&] {
      Tensor<double> total;
      last.clear();
      for (const auto& ex : batch) {
        auto fwd = forward_train(p, ex, Strategy::ReTAG, 0.25);
        for (auto& idx : fwd.code_indices) last.push_back(idx);
        auto loss = total_loss(fwd, std::span<const int>(ex.target), ex.analytical, LossSwitches{});
        total = total.defined() ? add(total, loss.total) : loss.total;
      }
      if (!have_base) {
        base = last;
        have_base = true;
      }
      return scale(total, 0.5);
    };
    try {
      auto rep = grad_check(f, params, o.h, o.model_tol, [&] { return last == base; });
      VerificationResult r{name, rep.max_rel_err(), o.model_tol, rep.passed(), ""};
      r.detail = std::to_string(p.parameter_count()) + " parameters, " + std::to_string(attempt) + " resamples";
      if (!r.passed)
        for (const auto& e : rep.entries)
          if (!e.passed) r.detail += "; " + e.name + " rel " + std::to_string(e.max_rel_err);
      return r;
    } catch (const NumericError&) {
      continue;  // crossed an argmin boundary; draw a new model
    }
  }
  return {name, 0, o.model_tol, false, "every sample crossed a quantization boundary"};
}

inline std::vector<VerificationResult> verification_suite(const VerificationOptions& o = {}) {
  auto out = verify_primitives(o);
  out.push_back(verify_model(o, 6));
  out.push_back(verify_model(o, 2));
  return out;
}

}  // namespace retag
