#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csguide/ml/encoding.hpp"

namespace csguide::ml {

struct CartParams {
  int max_depth = 15;
  int min_samples_split = 15;
  int min_samples_leaf = 5;
  bool balanced_class_weight = true;
  int max_rules_per_target = 10;
  int min_samples_for_rule = 10;

  void validate() const;
  friend bool operator==(const CartParams&, const CartParams&) = default;
};

/// Structural limits used while growing one tree.
struct GrowthLimits {
  int max_depth = 15;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool balanced_class_weight = true;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  int depth = 0;
  int samples = 0;
  double positive_weight = 0.0;
  double negative_weight = 0.0;
  bool prediction = false;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RuleCondition {
  int feature = 0;
  bool above = false;  // true: x > threshold; false: x <= threshold
  double threshold = 0.0;

  friend bool operator==(const RuleCondition&, const RuleCondition&) = default;
};

/// A root-to-leaf path whose leaf recommends the intervention.
struct TreeRule {
  std::vector<RuleCondition> conditions;
  int support = 0;

  bool fires(const double* x) const;
  std::string describe() const;
  friend bool operator==(const TreeRule&, const TreeRule&) = default;
};

class DecisionTree {
public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root; preorder, left first

  bool predict(const double* x) const;
  int depth() const;
  bool constant() const noexcept { return nodes.size() == 1; }

  /// Positive-leaf paths with support >= min_samples, largest support first.
  std::vector<TreeRule> positive_rules(int min_samples) const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Per-feature sorted unique values and each sample's bin index.
struct BinnedData {
  std::size_t rows = 0;
  std::array<std::vector<double>, kFeatureCount> values;
  std::vector<std::uint16_t> bins;  // rows x kFeatureCount, row-major

  std::uint16_t bin(std::size_t row, std::size_t feature) const { return bins[row * kFeatureCount + feature]; }
};

BinnedData bin_dataset(const std::vector<EncodedSample>& data);

/// Grows a tree for label `target`. multiplicity[i] counts how often sample i
/// appears in the training sample (0 excludes it).
DecisionTree grow_tree(const BinnedData& binned, const std::vector<EncodedSample>& data, std::size_t target,
                       const std::vector<int>& multiplicity, const GrowthLimits& limits);

}  // namespace csguide::ml
