#pragma once

#include <cstdint>

#include "csguide/ml/cart.hpp"

namespace csguide::ml {

struct ForestParams {
  int tree_count = 100;
  int max_depth = 15;
  double min_rule_frequency = 0.1;
  std::uint64_t bootstrap_seed = 0;
  bool bootstrap = true;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool balanced_class_weight = true;

  void validate() const;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Sample multiplicities of one bootstrap resample of n rows.
std::vector<int> bootstrap_multiplicity(std::size_t n, std::uint64_t seed);

}  // namespace csguide::ml
