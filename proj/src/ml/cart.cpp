#include "csguide/ml/cart.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "csguide/text.hpp"

namespace csguide::ml {

void CartParams::validate() const {
  if (max_depth < 1 || min_samples_split < 1 || min_samples_leaf < 1 || max_rules_per_target < 1 ||
      min_samples_for_rule < 1)
    throw Error("cart parameters must be positive");
}

bool TreeRule::fires(const double* x) const {
  for (const auto& c : conditions)
    if ((x[c.feature] > c.threshold) != c.above) return false;
  return true;
}

std::string TreeRule::describe() const {
  const auto& names = feature_index_map();
  std::vector<std::string> parts;
  for (const auto& c : conditions)
    parts.push_back(names[static_cast<std::size_t>(c.feature)] + (c.above ? " > " : " <= ") +
                    text::format_double(c.threshold));
  return parts.empty() ? "always" : text::join(parts, " AND ");
}

bool DecisionTree::predict(const double* x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf())
    i = static_cast<std::size_t>(x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
  return nodes[i].prediction;
}

int DecisionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::vector<TreeRule> DecisionTree::positive_rules(int min_samples) const {
  std::vector<TreeRule> out;
  std::vector<RuleCondition> path;
  auto walk = [&](auto&& self, int i) -> void {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf()) {
      if (n.prediction && n.samples >= min_samples) out.push_back({path, n.samples});
      return;
    }
    path.push_back({n.feature, false, n.threshold});
    self(self, n.left);
    path.back().above = true;
    self(self, n.right);
    path.pop_back();
  };
  if (!nodes.empty()) walk(walk, 0);
  std::stable_sort(out.begin(), out.end(), [](const TreeRule& a, const TreeRule& b) { return a.support > b.support; });
  return out;
}

BinnedData bin_dataset(const std::vector<EncodedSample>& data) {
  BinnedData b;
  b.rows = data.size();
  b.bins.resize(data.size() * kFeatureCount);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    std::set<double> unique;
    for (const auto& s : data) unique.insert(s.features[f]);
    b.values[f].assign(unique.begin(), unique.end());
    for (std::size_t r = 0; r < data.size(); ++r) {
      auto it = std::lower_bound(b.values[f].begin(), b.values[f].end(), data[r].features[f]);
      b.bins[r * kFeatureCount + f] = static_cast<std::uint16_t>(it - b.values[f].begin());
    }
  }
  return b;
}

namespace {

double gini(double pos, double neg) {
  const double w = pos + neg;
  if (w <= 0) return 0.0;
  const double p = pos / w, q = neg / w;
  return 1.0 - p * p - q * q;
}

struct Grower {
  const BinnedData& binned;
  const std::vector<EncodedSample>& data;
  std::size_t target;
  const std::vector<int>& mult;
  const GrowthLimits& limits;
  double w_pos = 1.0, w_neg = 1.0;
  DecisionTree tree;

  // Histogram scratch, reused across nodes.
  std::vector<int> h_count;
  std::vector<double> h_pos, h_neg;

  int build(std::vector<std::size_t>& rows, int depth) {
    TreeNode node;
    node.depth = depth;
    for (std::size_t r : rows) {
      node.samples += mult[r];
      if (data[r].labels[target])
        node.positive_weight += w_pos * mult[r];
      else
        node.negative_weight += w_neg * mult[r];
    }
    node.prediction = node.positive_weight > node.negative_weight;
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);

    const bool pure = node.positive_weight == 0.0 || node.negative_weight == 0.0;
    if (pure || depth >= limits.max_depth || node.samples < limits.min_samples_split ||
        node.samples < 2 * limits.min_samples_leaf)
      return index;

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = -1.0;
    const double parent = (node.positive_weight + node.negative_weight) * gini(node.positive_weight, node.negative_weight);

    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const std::size_t nb = binned.values[f].size();
      if (nb < 2) continue;
      h_count.assign(nb, 0);
      h_pos.assign(nb, 0.0);
      h_neg.assign(nb, 0.0);
      for (std::size_t r : rows) {
        const std::uint16_t b = binned.bin(r, f);
        h_count[b] += mult[r];
        if (data[r].labels[target])
          h_pos[b] += w_pos * mult[r];
        else
          h_neg[b] += w_neg * mult[r];
      }
      int l_count = 0;
      double l_pos = 0.0, l_neg = 0.0;
      std::size_t prev = nb;
      for (std::size_t b = 0; b < nb; ++b) {
        if (h_count[b] == 0) continue;
        if (prev != nb) {
          const int r_count = node.samples - l_count;
          if (l_count >= limits.min_samples_leaf && r_count >= limits.min_samples_leaf) {
            const double r_pos = node.positive_weight - l_pos, r_neg = node.negative_weight - l_neg;
            const double gain =
                parent - (l_pos + l_neg) * gini(l_pos, l_neg) - (r_pos + r_neg) * gini(r_pos, r_neg);
            if (gain > best_gain + 1e-12) {
              best_gain = gain;
              best_feature = static_cast<int>(f);
              best_threshold = 0.5 * (binned.values[f][prev] + binned.values[f][b]);
            }
          }
        }
        l_count += h_count[b];
        l_pos += h_pos[b];
        l_neg += h_neg[b];
        prev = b;
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (data[r].features[static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[static_cast<std::size_t>(index)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
    const int l = build(left, depth + 1);
    tree.nodes[static_cast<std::size_t>(index)].left = l;
    const int r = build(right, depth + 1);
    tree.nodes[static_cast<std::size_t>(index)].right = r;
    return index;
  }
};

}  // namespace

DecisionTree grow_tree(const BinnedData& binned, const std::vector<EncodedSample>& data, std::size_t target,
                       const std::vector<int>& multiplicity, const GrowthLimits& limits) {
  if (data.empty()) throw EmptyDataset();
  if (multiplicity.size() != data.size()) throw Error("grow_tree: multiplicity size mismatch");
  Grower g{binned, data, target, multiplicity, limits, 1.0, 1.0, {}, {}, {}, {}};

  std::vector<std::size_t> rows;
  double n_pos = 0, n_neg = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (multiplicity[r] <= 0) continue;
    rows.push_back(r);
    (data[r].labels[target] ? n_pos : n_neg) += multiplicity[r];
  }
  if (rows.empty()) throw EmptyDataset();
  if (limits.balanced_class_weight && n_pos > 0 && n_neg > 0) {
    const double n = n_pos + n_neg;
    g.w_pos = n / (2.0 * n_pos);
    g.w_neg = n / (2.0 * n_neg);
  }
  g.build(rows, 0);
  return std::move(g.tree);
}

}  // namespace csguide::ml
