#include "csguide/ml/forest.hpp"

#include "csguide/random.hpp"

namespace csguide::ml {

void ForestParams::validate() const {
  if (tree_count < 1) throw Error("forest tree_count must be >= 1");
  if (max_depth < 1 || min_samples_split < 1 || min_samples_leaf < 1)
    throw Error("forest depth and sample limits must be positive");
  if (!(min_rule_frequency > 0 && min_rule_frequency <= 1)) throw Error("forest min_rule_frequency must be in (0, 1]");
}

std::vector<int> bootstrap_multiplicity(std::size_t n, std::uint64_t seed) {
  std::vector<int> mult(n, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) ++mult[rng.below(n)];
  return mult;
}

}  // namespace csguide::ml
