#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "retag/errors.hpp"
#include "retag/numerics/rng.hpp"
#include "retag/tables/table.hpp"

namespace retag {

struct SplitResult {
  std::vector<Instance> train;
  std::vector<Instance> valid;
  std::vector<Instance> test;
};

/// Seeded shuffle then contiguous cut. valid and test get floor(n * f);
/// the remainder goes to train. Each instance's split field is updated.
inline SplitResult split_instances(std::vector<Instance> instances, std::array<double, 3> fractions,
                                   std::uint64_t seed) {
  for (double f : fractions)
    if (f < 0) throw ConfigError("split: negative fraction");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
  const std::size_t n = instances.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "split");
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[1]));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[2]));
  const std::size_t n_train = n - n_valid - n_test;

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst = std::move(instances[order[i]]);
    if (i < n_train) {
      inst.split = Split::Train;
      out.train.push_back(std::move(inst));
    } else if (i < n_train + n_valid) {
      inst.split = Split::Valid;
      out.valid.push_back(std::move(inst));
    } else {
      inst.split = Split::Test;
      out.test.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace retag
