#include "csguide/ml/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "csguide/parallel.hpp"
#include "csguide/text.hpp"

namespace csguide::ml {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Cart: return "cart";
    case ModelKind::Forest: return "forest";
    case ModelKind::Mlp: return "mlp";
  }
  return "cart";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "cart") return ModelKind::Cart;
  if (text == "forest") return ModelKind::Forest;
  if (text == "mlp") return ModelKind::Mlp;
  throw Error("unknown model kind '" + std::string(text) + "'");
}

namespace {

TrainingMetadata metadata_for(const std::vector<EncodedSample>& data, std::uint64_t seed, const json& params) {
  TrainingMetadata m;
  m.seed = seed;
  m.params = params.dump();
  m.dataset_hash = dataset_hash(data);
  m.samples = data.size();
  return m;
}

bool vote(const std::vector<DecisionTree>& trees, const double* x) {
  std::size_t yes = 0;
  for (const auto& t : trees) yes += t.predict(x) ? 1 : 0;
  return 2 * yes > trees.size();
}

void fill_training_stats(TargetModel& tm, const std::vector<EncodedSample>& data, std::size_t target) {
  std::size_t correct = 0;
  tm.positives = 0;
  for (const auto& s : data) {
    tm.positives += s.labels[target];
    correct += vote(tm.trees, s.features.data()) == (s.labels[target] != 0) ? 1 : 0;
  }
  tm.degenerate = tm.positives == 0 || tm.positives == static_cast<int>(data.size());
  tm.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
}

void check_tree_inputs(const std::vector<EncodedSample>& data) {
  if (data.empty()) throw EmptyDataset();
}

}  // namespace

PredictorModel train_cart(const std::vector<EncodedSample>& data, const CartParams& params, unsigned workers) {
  check_tree_inputs(data);
  params.validate();
  PredictorModel model;
  model.kind = ModelKind::Cart;
  model.feature_map = feature_index_map();
  model.targets.resize(kLabelCount);
  model.metadata = metadata_for(data, 0,
                                {{"max_depth", params.max_depth},
                                 {"min_samples_split", params.min_samples_split},
                                 {"min_samples_leaf", params.min_samples_leaf},
                                 {"class_weight", params.balanced_class_weight ? "balanced" : "none"},
                                 {"max_rules_per_target", params.max_rules_per_target},
                                 {"min_samples_for_rule", params.min_samples_for_rule}});

  const BinnedData binned = bin_dataset(data);
  const std::vector<int> all(data.size(), 1);
  const GrowthLimits limits{params.max_depth, params.min_samples_split, params.min_samples_leaf,
                            params.balanced_class_weight};
  parallel_for(kLabelCount, workers, [&](std::size_t t) {
    TargetModel& tm = model.targets[t];
    tm.trees.push_back(grow_tree(binned, data, t, all, limits));
    tm.rules = tm.trees.front().positive_rules(params.min_samples_for_rule);
    if (tm.rules.size() > static_cast<std::size_t>(params.max_rules_per_target))
      tm.rules.resize(static_cast<std::size_t>(params.max_rules_per_target));
    fill_training_stats(tm, data, t);
  });
  return model;
}

PredictorModel train_forest(const std::vector<EncodedSample>& data, const ForestParams& params, unsigned workers) {
  check_tree_inputs(data);
  params.validate();
  PredictorModel model;
  model.kind = ModelKind::Forest;
  model.feature_map = feature_index_map();
  model.targets.resize(kLabelCount);
  model.metadata = metadata_for(data, params.bootstrap_seed,
                                {{"tree_count", params.tree_count},
                                 {"max_depth", params.max_depth},
                                 {"min_rule_frequency", params.min_rule_frequency},
                                 {"bootstrap", params.bootstrap},
                                 {"min_samples_split", params.min_samples_split},
                                 {"min_samples_leaf", params.min_samples_leaf},
                                 {"class_weight", params.balanced_class_weight ? "balanced" : "none"}});

  const BinnedData binned = bin_dataset(data);
  const GrowthLimits limits{params.max_depth, params.min_samples_split, params.min_samples_leaf,
                            params.balanced_class_weight};
  const int min_support =
      static_cast<int>(std::ceil(params.min_rule_frequency * static_cast<double>(data.size()) - 1e-9));
  parallel_for(kLabelCount, workers, [&](std::size_t t) {
    TargetModel& tm = model.targets[t];
    std::map<std::string, TreeRule> unique;
    for (int k = 0; k < params.tree_count; ++k) {
      const std::vector<int> mult = params.bootstrap
                                        ? bootstrap_multiplicity(data.size(), derive_seed(params.bootstrap_seed, t, k))
                                        : std::vector<int>(data.size(), 1);
      tm.trees.push_back(grow_tree(binned, data, t, mult, limits));
      for (auto& rule : tm.trees.back().positive_rules(std::max(min_support, 1))) {
        auto [it, inserted] = unique.emplace(rule.describe(), rule);
        if (!inserted) it->second.support = std::max(it->second.support, rule.support);
      }
    }
    for (auto& [desc, rule] : unique) tm.rules.push_back(std::move(rule));
    std::stable_sort(tm.rules.begin(), tm.rules.end(),
                     [](const TreeRule& a, const TreeRule& b) { return a.support > b.support; });
    fill_training_stats(tm, data, t);
  });
  return model;
}

PredictorModel train_mlp(const std::vector<EncodedSample>& data, const MlpParams& params) {
  if (data.empty()) throw EmptyDataset();
  params.validate();
  PredictorModel model;
  model.kind = ModelKind::Mlp;
  model.feature_map = feature_index_map();
  model.metadata = metadata_for(data, params.seed,
                                {{"layer_widths", params.layer_widths},
                                 {"dropout_rate", params.dropout_rate},
                                 {"l2_coefficient", params.l2_coefficient},
                                 {"batch_norm", params.batch_norm},
                                 {"epochs", params.epochs},
                                 {"learning_rate", params.learning_rate},
                                 {"batch_size", params.batch_size},
                                 {"optimizer", params.optimizer == Optimizer::Adam ? "adam" : "sgd"},
                                 {"regularize_output", params.regularize_output}});

  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(kFeatureCount));
  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(kLabelCount));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < kFeatureCount; ++f) x(i, static_cast<Eigen::Index>(f)) = s.features[f];
    for (std::size_t l = 0; l < kLabelCount; ++l) y(i, static_cast<Eigen::Index>(l)) = s.labels[l];
  }
  Rng init(derive_seed(params.seed, 0));
  Mlp<double> net(static_cast<int>(kFeatureCount), params.layer_widths, static_cast<int>(kLabelCount),
                  params.batch_norm, params.dropout_rate, params.l2_coefficient, params.regularize_output, init);
  model.metadata.epoch_losses = fit_mlp(net, x, y, params);
  model.mlp = std::move(net);
  return model;
}

std::vector<InterventionSet> predict_all(const PredictorModel& model, const std::vector<EncodedSample>& samples,
                                         const std::vector<std::string>& feature_map) {
  if (feature_map != model.feature_map) throw FeatureMapMismatch("feature index map differs from the model's");
  std::vector<InterventionSet> out(samples.size());
  if (model.kind == ModelKind::Mlp) {
    if (!model.mlp) throw Error("mlp model has no network");
    Mlp<double> net = *model.mlp;
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (std::size_t f = 0; f < kFeatureCount; ++f) x(0, static_cast<Eigen::Index>(f)) = samples[i].features[f];
      const Eigen::MatrixXd logits = net.forward(x, false);
      for (std::size_t l = 0; l < kLabelCount; ++l)
        if (logits(0, static_cast<Eigen::Index>(l)) > 0.0) out[i].set_index(l);
    }
    return out;
  }
  if (model.targets.size() != kLabelCount) throw Error("tree model must hold one classifier per intervention");
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t l = 0; l < kLabelCount; ++l)
      if (vote(model.targets[l].trees, samples[i].features.data())) out[i].set_index(l);
  return out;
}

InterventionSet predict(const PredictorModel& model, const EncodedSample& sample,
                        const std::vector<std::string>& feature_map) {
  return predict_all(model, {sample}, feature_map).front();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "csguide-model";
constexpr int kFormatVersion = 1;

std::string d2s(double v) { return text::format_double(v); }

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << "matrix " << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << d2s(m(i, j));
    out << '\n';
  }
}

class Reader {
public:
  explicit Reader(std::string_view content) : in_(std::string(content)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw Error("model file truncated");
    return w;
  }
  void expect(std::string_view w) {
    const std::string got = word();
    if (got != w) throw Error("model file: expected '" + std::string(w) + "', got '" + got + "'");
  }
  long integer() {
    const std::string w = word();
    try {
      std::size_t pos = 0;
      const long v = std::stol(w, &pos);
      if (pos != w.size()) throw Error("");
      return v;
    } catch (...) {
      throw Error("model file: bad integer '" + w + "'");
    }
  }
  double real() { return text::parse_double(word()); }
  std::string rest_of_line() {
    std::string line;
    std::getline(in_, line);
    return text::trim(line);
  }
  Eigen::MatrixXd matrix() {
    expect("matrix");
    const long r = integer(), c = integer();
    Eigen::MatrixXd m(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = real();
    return m;
  }

private:
  std::istringstream in_;
};

}  // namespace

void save_model(std::ostream& out, const PredictorModel& model) {
  const auto& md = model.metadata;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "kind " << to_string(model.kind) << '\n';
  out << "features " << model.feature_map.size();
  for (const auto& f : model.feature_map) out << ' ' << f;
  out << '\n';
  out << "seed " << md.seed << '\n';
  out << "samples " << md.samples << '\n';
  out << "dataset_hash " << md.dataset_hash << '\n';
  out << "params " << md.params << '\n';
  out << "epoch_losses " << md.epoch_losses.size();
  for (double l : md.epoch_losses) out << ' ' << d2s(l);
  out << '\n';

  if (model.kind == ModelKind::Mlp) {
    const auto& net = *model.mlp;
    out << "mlp " << net.inputs() << ' ' << net.outputs() << ' ' << (net.batch_norm() ? 1 : 0) << ' '
        << d2s(net.dropout()) << ' ' << d2s(net.l2()) << ' ' << (net.regularize_output() ? 1 : 0) << ' '
        << net.hidden().size();
    for (int w : net.hidden()) out << ' ' << w;
    out << '\n';
    for (const auto& p : net.params()) write_matrix(out, p);
    for (const auto& r : net.running()) write_matrix(out, r);
  } else {
    out << "targets " << model.targets.size() << '\n';
    for (std::size_t t = 0; t < model.targets.size(); ++t) {
      const auto& tm = model.targets[t];
      out << "target " << FlagTraits<Intervention>::codes[t] << ' ' << (tm.degenerate ? 1 : 0) << ' '
          << d2s(tm.training_accuracy) << ' ' << tm.positives << ' ' << tm.trees.size() << ' ' << tm.rules.size()
          << '\n';
      for (const auto& tree : tm.trees) {
        out << "tree " << tree.nodes.size() << '\n';
        for (const auto& n : tree.nodes)
          out << "node " << n.feature << ' ' << d2s(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.depth
              << ' ' << n.samples << ' ' << d2s(n.positive_weight) << ' ' << d2s(n.negative_weight) << ' '
              << (n.prediction ? 1 : 0) << '\n';
      }
      for (const auto& rule : tm.rules) {
        out << "rule " << rule.support << ' ' << rule.conditions.size();
        for (const auto& c : rule.conditions) out << ' ' << c.feature << ' ' << (c.above ? 1 : 0) << ' ' << d2s(c.threshold);
        out << '\n';
      }
    }
  }
  out << "end\n";
}

PredictorModel load_model(std::string_view content) {
  Reader in(content);
  in.expect(kMagic);
  if (in.integer() != kFormatVersion) throw Error("unsupported model format version");
  PredictorModel model;
  in.expect("kind");
  model.kind = parse_model_kind(in.word());
  in.expect("features");
  const long nf = in.integer();
  for (long i = 0; i < nf; ++i) model.feature_map.push_back(in.word());
  auto& md = model.metadata;
  in.expect("seed");
  md.seed = std::stoull(in.word());
  in.expect("samples");
  md.samples = static_cast<std::size_t>(in.integer());
  in.expect("dataset_hash");
  md.dataset_hash = in.word();
  in.expect("params");
  md.params = in.rest_of_line();
  in.expect("epoch_losses");
  const long ne = in.integer();
  for (long i = 0; i < ne; ++i) md.epoch_losses.push_back(in.real());

  if (model.kind == ModelKind::Mlp) {
    in.expect("mlp");
    const int inputs = static_cast<int>(in.integer());
    const int outputs = static_cast<int>(in.integer());
    const bool bn = in.integer() != 0;
    const double dropout = in.real();
    const double l2 = in.real();
    const bool regularize_output = in.integer() != 0;
    std::vector<int> hidden(static_cast<std::size_t>(in.integer()));
    for (auto& w : hidden) w = static_cast<int>(in.integer());
    Rng unused(0);
    Mlp<double> net(inputs, hidden, outputs, bn, dropout, l2, regularize_output, unused);
    for (auto& p : net.params()) {
      Eigen::MatrixXd m = in.matrix();
      if (m.rows() != p.rows() || m.cols() != p.cols()) throw Error("model file: parameter shape mismatch");
      p = std::move(m);
    }
    for (auto& r : net.running()) {
      Eigen::MatrixXd m = in.matrix();
      if (m.rows() != r.rows() || m.cols() != r.cols()) throw Error("model file: running statistics shape mismatch");
      r = std::move(m);
    }
    model.mlp = std::move(net);
  } else {
    in.expect("targets");
    model.targets.resize(static_cast<std::size_t>(in.integer()));
    for (std::size_t t = 0; t < model.targets.size(); ++t) {
      auto& tm = model.targets[t];
      in.expect("target");
      if (in.word() != FlagTraits<Intervention>::codes[t]) throw Error("model file: targets out of order");
      tm.degenerate = in.integer() != 0;
      tm.training_accuracy = in.real();
      tm.positives = static_cast<int>(in.integer());
      const long trees = in.integer(), rules = in.integer();
      for (long k = 0; k < trees; ++k) {
        in.expect("tree");
        DecisionTree tree;
        tree.nodes.resize(static_cast<std::size_t>(in.integer()));
        for (auto& n : tree.nodes) {
          in.expect("node");
          n.feature = static_cast<int>(in.integer());
          n.threshold = in.real();
          n.left = static_cast<int>(in.integer());
          n.right = static_cast<int>(in.integer());
          n.depth = static_cast<int>(in.integer());
          n.samples = static_cast<int>(in.integer());
          n.positive_weight = in.real();
          n.negative_weight = in.real();
          n.prediction = in.integer() != 0;
        }
        tm.trees.push_back(std::move(tree));
      }
      for (long k = 0; k < rules; ++k) {
        in.expect("rule");
        TreeRule rule;
        rule.support = static_cast<int>(in.integer());
        rule.conditions.resize(static_cast<std::size_t>(in.integer()));
        for (auto& c : rule.conditions) {
          c.feature = static_cast<int>(in.integer());
          c.above = in.integer() != 0;
          c.threshold = in.real();
        }
        tm.rules.push_back(std::move(rule));
      }
    }
  }
  in.expect("end");
  return model;
}

std::string training_manifest(const PredictorModel& model) {
  const auto& md = model.metadata;
  json doc = {{"kind", to_string(model.kind)},
              {"seed", md.seed},
              {"params", json::parse(md.params.empty() ? "{}" : md.params)},
              {"dataset_hash", md.dataset_hash},
              {"samples", md.samples},
              {"feature_map", model.feature_map}};
  if (!md.epoch_losses.empty())
    doc["loss"] = {{"first_epoch", md.epoch_losses.front()}, {"last_epoch", md.epoch_losses.back()}};
  json targets = json::array();
  for (std::size_t t = 0; t < model.targets.size(); ++t) {
    const auto& tm = model.targets[t];
    std::vector<std::string> rules;
    for (const auto& r : tm.rules) rules.push_back(r.describe() + " (support " + std::to_string(r.support) + ")");
    targets.push_back({{"intervention", FlagTraits<Intervention>::codes[t]},
                       {"degenerate", tm.degenerate},
                       {"positives", tm.positives},
                       {"training_accuracy", tm.training_accuracy},
                       {"trees", tm.trees.size()},
                       {"rules", rules}});
  }
  if (!targets.empty()) doc["targets"] = targets;
  return doc.dump(2);
}

}  // namespace csguide::ml
