#pragma once

// Independent AUC oracle: counts every (id, ood) pair directly.

#include <cstdint>
#include <vector>

#include "oodrl/rng.hpp"

namespace oodrl::testing {

inline double brute_force_auc(const std::vector<double>& id, const std::vector<double>& ood) {
  std::uint64_t twice = 0;  // 2 per win, 1 per tie
  for (double o : ood)
    for (double i : id) twice += o > i ? 2 : (o == i ? 1 : 0);
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

struct AucInstance {
  std::vector<double> id, ood;
};

// Sizes in [1, max_size]; scores drawn from a small grid so ties are common.
inline AucInstance random_auc_instance(Rng& rng, std::size_t max_size) {
  AucInstance inst;
  const std::size_t n = 1 + rng.index(max_size), m = 1 + rng.index(max_size);
  const std::uint64_t levels = 2 + rng.index(40);
  const double shift = rng.uniform(-0.5, 0.5);
  for (std::size_t i = 0; i < n; ++i) inst.id.push_back(static_cast<double>(rng.index(levels)) / levels);
  for (std::size_t i = 0; i < m; ++i)
    inst.ood.push_back(static_cast<double>(rng.index(levels)) / levels + (rng.bernoulli(0.5) ? shift : 0.0));
  return inst;
}

}  // namespace oodrl::testing
