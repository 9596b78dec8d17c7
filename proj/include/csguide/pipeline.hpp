#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csguide/ml/predictor.hpp"
#include "csguide/qual_features.hpp"

namespace csguide::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kAnnotatorError = 3 };

class UsageError : public Error {
public:
  using Error::Error;
};

/// Remote annotation failed and the lexicon fallback failed too.
class AnnotatorFailure : public Error {
public:
  using Error::Error;
};

struct RunConfig {
  std::filesystem::path calendar;
  std::filesystem::path catalog;
  std::filesystem::path rule_table;
  std::filesystem::path overlay;
  std::filesystem::path lexicon;
  std::filesystem::path prompt_template;
  std::filesystem::path phrase_bank;
  AnnotatorMode annotator = AnnotatorMode::Fallback;
  AnnotatorConfig remote;
  ml::CartParams cart;
  ml::ForestParams forest;
  ml::MlpParams mlp;
  std::uint64_t seed = 42;
  unsigned workers = 1;
  std::filesystem::path out = "out";

  /// Bundled data files, addressed by absolute path.
  static RunConfig defaults();
  /// JSON config; relative paths resolve against the file's directory.
  static RunConfig load(const std::filesystem::path& path);

  /// Every referenced file must exist.
  void validate() const;
  std::string to_json() const;
  std::string hash() const;
};

/// Structured line records (one JSON object per line).
class Logger {
public:
  explicit Logger(std::ostream* sink) : sink_(sink) {}
  void log(std::string_view level, std::string_view event, const std::string& fields_json = "{}");

private:
  std::ostream* sink_;
};

struct IngestArgs {
  std::filesystem::path reports;
  bool keep_latest = false;
};

struct ExtractArgs {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> cache;  // default <out>/annotation_cache.jsonl
};

struct FeatureInputs {
  std::filesystem::path corpus;
  std::filesystem::path quant;
  std::filesystem::path qual;
};

struct PredictArgs {
  FeatureInputs features;
  std::string method = "rules";  // rules | model
  std::filesystem::path model;
};

struct TrainArgs {
  FeatureInputs features;
  std::filesystem::path labels;
  std::string method = "all";  // cart | forest | mlp | all
};

struct EvaluateArgs {
  FeatureInputs features;
  std::filesystem::path labels;
  std::filesystem::path models_dir;
  int resamples = 1000;
  double level = 0.90;
};

struct SynthArgs {
  int students = 54;
  std::string id_prefix = "S";
  double late_posting_rate = 0.0;
  int late_posting_weeks = 1;
  double typo_rate = 0.0;
  double skipped_journal_rate = 0.0;
};

int cmd_ingest(const RunConfig& config, const IngestArgs& args, std::ostream& out, Logger& log);
int cmd_extract(const RunConfig& config, const ExtractArgs& args, std::ostream& out, Logger& log);
int cmd_predict(const RunConfig& config, const PredictArgs& args, std::ostream& out, Logger& log);
int cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& out, Logger& log);
int cmd_evaluate(const RunConfig& config, const EvaluateArgs& args, std::ostream& out, Logger& log);
int cmd_synth(const RunConfig& config, const SynthArgs& args, std::ostream& out, Logger& log);

/// Full command line: parses arguments, runs the subcommand and maps
/// exceptions to exit codes with a machine-readable error record on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Encoded samples for every (student, week) of the corpus, in corpus order.
/// Labels are looked up when `labels` is given; a missing label throws.
std::vector<ml::EncodedSample> load_samples(const FeatureInputs& inputs,
                                            const std::filesystem::path* labels, const AcademicCalendar& calendar,
                                            std::vector<std::pair<std::string, int>>* keys = nullptr);

}  // namespace csguide::cli
