#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/rule_engine.hpp"

namespace csguide {

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long total() const noexcept { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

enum class MetricScope { PerIntervention, Micro };

struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  ConfusionCounts counts;
  MetricScope scope = MetricScope::Micro;
};

struct GroundTruthRecord {
  std::string student_id;
  int semester_week = 0;
  InterventionSet labeled_interventions;
  std::string labeler;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

class KeyMismatch : public Error {
public:
  KeyMismatch(std::vector<std::string> missing, std::vector<std::string> extra);
  /// Keys ("student:week") present in truth but not in predictions, and the reverse.
  const std::vector<std::string>& missing() const noexcept { return missing_; }
  const std::vector<std::string>& extra() const noexcept { return extra_; }

private:
  std::vector<std::string> missing_, extra_;
};

class InsufficientUnits : public Error {
public:
  using Error::Error;
};

struct ConfusionTable {
  std::array<ConfusionCounts, kInterventionCount> per_intervention{};
  ConfusionCounts micro;
};

/// Cell-wise comparison over every (student, week) key and intervention.
ConfusionTable confusion(const std::vector<WeeklyDecision>& predictions, const std::vector<GroundTruthRecord>& truth);

/// Precision, recall and F1 are 0 when their denominators are 0.
MetricsReport metrics(const ConfusionCounts& counts, MetricScope scope = MetricScope::Micro);

struct StudentMetrics {
  std::string student_id;
  MetricsReport report;
};

/// Micro counts per student, in order of first appearance in `truth`.
std::vector<StudentMetrics> per_student_metrics(const std::vector<WeeklyDecision>& predictions,
                                                const std::vector<GroundTruthRecord>& truth);

struct Interval {
  double point = 0, lo = 0, hi = 0;
  double half_width() const noexcept { return (hi - lo) / 2; }
};

struct MetricIntervals {
  Interval accuracy, precision, recall, f1;
};

/// Percentile bootstrap over students: resample with replacement, pool the
/// confusion counts, recompute micro metrics and take nearest-rank
/// quantiles. Endpoints are widened to contain the point estimate.
MetricIntervals bootstrap_ci(const std::vector<StudentMetrics>& per_student, double level = 0.90, int resamples = 1000,
                             std::uint64_t seed = 0, unsigned workers = 1);

struct MethodPredictions {
  std::string method;
  std::vector<WeeklyDecision> decisions;
};

struct ComparisonRow {
  std::string method;
  MetricsReport micro;
  std::array<MetricsReport, kInterventionCount> per_intervention{};
  MetricIntervals intervals;
};

struct ComparisonOptions {
  double level = 0.90;
  int resamples = 1000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

std::vector<ComparisonRow> compare_predictors(const std::vector<MethodPredictions>& methods,
                                              const std::vector<GroundTruthRecord>& truth,
                                              const ComparisonOptions& options = {});

/// Delimiter-separated table, one row per method.
void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows);
/// Structured report including per-intervention breakdowns.
std::string comparison_json(const std::vector<ComparisonRow>& rows, const ComparisonOptions& options);

std::vector<GroundTruthRecord> ground_truth_from(const std::vector<WeeklyDecision>& decisions, std::string_view labeler);

/// Labeled corpus: student_id, semester_week, interventions, labeler.
void write_labels(std::ostream& out, const std::vector<GroundTruthRecord>& records);
std::vector<GroundTruthRecord> read_labels(std::string_view content);

}  // namespace csguide
