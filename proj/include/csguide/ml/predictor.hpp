#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csguide/ml/cart.hpp"
#include "csguide/ml/encoding.hpp"
#include "csguide/ml/forest.hpp"
#include "csguide/ml/mlp.hpp"

namespace csguide::ml {

enum class ModelKind { Cart, Forest, Mlp };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

class FeatureMapMismatch : public Error {
public:
  using Error::Error;
};

/// Classifiers for one intervention. Cart holds one tree; Forest holds
/// tree_count trees combined by majority vote.
struct TargetModel {
  std::vector<DecisionTree> trees;
  std::vector<TreeRule> rules;
  bool degenerate = false;  // single label class in training data
  double training_accuracy = 0.0;
  int positives = 0;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::string params;  // JSON text
  std::string dataset_hash;
  std::size_t samples = 0;
  std::vector<double> epoch_losses;  // Mlp only
};

struct PredictorModel {
  ModelKind kind = ModelKind::Cart;
  std::vector<std::string> feature_map;
  std::vector<TargetModel> targets;  // kLabelCount entries for Cart/Forest
  std::optional<Mlp<double>> mlp;
  TrainingMetadata metadata;
};

PredictorModel train_cart(const std::vector<EncodedSample>& data, const CartParams& params = {}, unsigned workers = 1);
PredictorModel train_forest(const std::vector<EncodedSample>& data, const ForestParams& params = {},
                            unsigned workers = 1);
PredictorModel train_mlp(const std::vector<EncodedSample>& data, const MlpParams& params = {});

/// Throws FeatureMapMismatch when `feature_map` differs from the model's.
InterventionSet predict(const PredictorModel& model, const EncodedSample& sample,
                        const std::vector<std::string>& feature_map = feature_index_map());

/// Batched prediction; rows are evaluated independently.
std::vector<InterventionSet> predict_all(const PredictorModel& model, const std::vector<EncodedSample>& samples,
                                         const std::vector<std::string>& feature_map = feature_index_map());

/// Line-oriented text format; doubles are written in shortest round-trip form.
void save_model(std::ostream& out, const PredictorModel& model);
PredictorModel load_model(std::string_view content);

/// Training manifest: params, seed, dataset hash and per-target metrics.
std::string training_manifest(const PredictorModel& model);

}  // namespace csguide::ml
