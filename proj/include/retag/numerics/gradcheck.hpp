#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "retag/errors.hpp"
#include "retag/numerics/ops.hpp"
#include "retag/numerics/tensor.hpp"

namespace retag {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  double max_abs_err = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
  }
  double max_rel_err() const {
    double m = 0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
};

using NamedParams = std::vector<std::pair<std::string, Tensor<double>>>;

/// Relative error with a denominator floor, so entries whose true gradient
/// is ~0 are judged on absolute error scaled by the floor.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares autodiff gradients of `f` against central finite differences.
/// `f` must rebuild its graph from the current parameter values on each call.
/// `probe_ok`, when given, is called after every perturbed evaluation and may
/// veto the sample (e.g. when a perturbation crossed an argmin boundary); a
/// veto raises NumericError so the caller can resample the evaluation point.
///
/// Stop-gradient outputs are held at their values from the unperturbed
/// evaluation, so the differences measure the same derivative that autodiff
/// computes.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& f, NamedParams& params, double h,
                                  double tol, const std::function<bool()>& probe_ok = {}) {
  for (auto& [_, p] : params) p.zero_grad();
  FreezeStopGradients<double> freeze;
  const Tensor<double> loss = f();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss at evaluation point");
  backward(loss);

  GradCheckReport report;
  report.tolerance = tol;
  for (auto& [name, p] : params) {
    GradCheckEntry entry{name};
    const std::vector<double> analytic = p.grad_or_zeros();
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      freeze.replay();
      const double fp = f().item();
      if (probe_ok && !probe_ok()) {
        data[i] = orig;
        throw NumericError("grad_check: perturbation of " + name + " crossed a non-smooth boundary");
      }
      data[i] = orig - h;
      freeze.replay();
      const double fm = f().item();
      if (probe_ok && !probe_ok()) {
        data[i] = orig;
        throw NumericError("grad_check: perturbation of " + name + " crossed a non-smooth boundary");
      }
      data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: non-finite loss while probing " + name);
      const double numeric = (fp - fm) / (2 * h);
      entry.max_abs_err = std::max(entry.max_abs_err, std::abs(analytic[i] - numeric));
      entry.max_rel_err = std::max(entry.max_rel_err, relative_error(analytic[i], numeric));
    }
    entry.passed = entry.max_rel_err < tol;
    report.entries.push_back(std::move(entry));
  }
  for (auto& [_, p] : params) p.zero_grad();
  return report;
}

}  // namespace retag
