#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "retag/errors.hpp"
#include "retag/numerics/tensor.hpp"

namespace retag {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const {
    if (!(lr > 0)) throw ConfigError("adamw: lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
      throw ConfigError("adamw: betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("adamw: eps must be > 0");
    if (weight_decay < 0) throw ConfigError("adamw: weight_decay must be >= 0");
  }
};

/// First/second moments and step count for one parameter.
template <typename T>
struct OptimState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update with decoupled weight decay, in place.
template <typename T>
void adamw_step(std::span<T> param, std::span<const T> grad, OptimState<T>& state, const AdamWConfig& cfg) {
  if (grad.size() != param.size())
    throw DimensionError("adamw_step: parameter has " + std::to_string(param.size()) + " values, gradient " +
                         std::to_string(grad.size()));
  if (state.m.empty()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  if (state.m.size() != param.size() || state.v.size() != param.size())
    throw DimensionError("adamw_step: optimizer state does not match parameter size");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] = param[i] * decay - static_cast<T>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

/// AdamW over a set of named parameters. Parameters without an allocated
/// gradient (not reached by the last backward pass) are skipped entirely:
/// no decay and no state advance.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(std::map<std::string, Tensor<T>>& params) {
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      adamw_step<T>(p.mutable_data(), p.grad(), states_[name], cfg_);
    }
  }

  const OptimState<T>* state(const std::string& name) const {
    auto it = states_.find(name);
    return it == states_.end() ? nullptr : &it->second;
  }

  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, OptimState<T>> states_;
};

/// Rescales all present gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::map<std::string, Tensor<T>>& params, double max_norm) {
  double sq = 0;
  for (auto& [_, p] : params)
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [_, p] : params)
      if (p.has_grad())
        for (auto& g : p.node()->grad) g *= f;
  }
  return norm;
}

}  // namespace retag
