#include "csguide/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "csguide/parallel.hpp"
#include "csguide/random.hpp"
#include "csguide/text.hpp"

namespace csguide {

namespace {

std::string key_of(const std::string& student, int week) { return student + ":" + std::to_string(week); }

std::string preview(const std::vector<std::string>& keys) {
  std::string out;
  for (std::size_t i = 0; i < keys.size() && i < 5; ++i) out += (i ? ", " : "") + keys[i];
  if (keys.size() > 5) out += ", ...";
  return out;
}

ConfusionCounts cell_counts(const InterventionSet& predicted, const InterventionSet& truth, std::size_t index) {
  ConfusionCounts c;
  const bool p = predicted.test_index(index), t = truth.test_index(index);
  if (p && t) ++c.tp;
  else if (p) ++c.fp;
  else if (t) ++c.fn;
  else ++c.tn;
  return c;
}

/// Pairs each truth record with its prediction; throws KeyMismatch.
std::vector<const WeeklyDecision*> align(const std::vector<WeeklyDecision>& predictions,
                                         const std::vector<GroundTruthRecord>& truth) {
  std::unordered_map<std::string, const WeeklyDecision*> by_key;
  std::vector<std::string> extra;
  for (const auto& d : predictions)
    if (!by_key.emplace(key_of(d.student_id, d.semester_week), &d).second)
      throw Error("duplicate prediction for " + key_of(d.student_id, d.semester_week));
  std::vector<const WeeklyDecision*> out;
  std::vector<std::string> missing;
  std::unordered_map<std::string, bool> used;
  for (const auto& t : truth) {
    const std::string k = key_of(t.student_id, t.semester_week);
    auto it = by_key.find(k);
    if (it == by_key.end()) {
      missing.push_back(k);
      continue;
    }
    if (used[k]) throw Error("duplicate ground truth for " + k);
    used[k] = true;
    out.push_back(it->second);
  }
  for (const auto& d : predictions) {
    const std::string k = key_of(d.student_id, d.semester_week);
    if (!used.count(k)) extra.push_back(k);
  }
  if (!missing.empty() || !extra.empty()) throw KeyMismatch(std::move(missing), std::move(extra));
  return out;
}

}  // namespace

KeyMismatch::KeyMismatch(std::vector<std::string> missing, std::vector<std::string> extra)
    : Error("prediction/label keys differ: " + std::to_string(missing.size()) + " missing [" + preview(missing) +
            "], " + std::to_string(extra.size()) + " extra [" + preview(extra) + "]"),
      missing_(std::move(missing)),
      extra_(std::move(extra)) {}

ConfusionTable confusion(const std::vector<WeeklyDecision>& predictions, const std::vector<GroundTruthRecord>& truth) {
  const auto aligned = align(predictions, truth);
  ConfusionTable table;
  for (std::size_t r = 0; r < truth.size(); ++r)
    for (std::size_t i = 0; i < kInterventionCount; ++i)
      table.per_intervention[i] += cell_counts(aligned[r]->interventions, truth[r].labeled_interventions, i);
  for (const auto& c : table.per_intervention) table.micro += c;
  return table;
}

MetricsReport metrics(const ConfusionCounts& c, MetricScope scope) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw Error("confusion counts must be non-negative");
  if (c.total() == 0) throw Error("metrics of an empty confusion matrix");
  MetricsReport r;
  r.counts = c;
  r.scope = scope;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::vector<StudentMetrics> per_student_metrics(const std::vector<WeeklyDecision>& predictions,
                                                const std::vector<GroundTruthRecord>& truth) {
  const auto aligned = align(predictions, truth);
  std::vector<StudentMetrics> out;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<ConfusionCounts> counts;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    auto [it, inserted] = index.emplace(truth[r].student_id, counts.size());
    if (inserted) {
      counts.emplace_back();
      out.push_back({truth[r].student_id, {}});
    }
    for (std::size_t i = 0; i < kInterventionCount; ++i)
      counts[it->second] += cell_counts(aligned[r]->interventions, truth[r].labeled_interventions, i);
  }
  for (std::size_t s = 0; s < out.size(); ++s) out[s].report = metrics(counts[s]);
  return out;
}

MetricIntervals bootstrap_ci(const std::vector<StudentMetrics>& per_student, double level, int resamples,
                             std::uint64_t seed, unsigned workers) {
  if (per_student.size() < 2) throw InsufficientUnits("bootstrap needs at least 2 students");
  if (resamples < 100) throw InsufficientUnits("bootstrap needs at least 100 resamples");
  if (!(level > 0 && level < 1)) throw Error("confidence level must be in (0, 1)");

  const std::size_t n = per_student.size();
  const auto r_count = static_cast<std::size_t>(resamples);
  std::array<std::vector<double>, 4> samples;
  for (auto& s : samples) s.resize(r_count);
  parallel_for(r_count, workers, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    ConfusionCounts pooled;
    for (std::size_t k = 0; k < n; ++k) pooled += per_student[rng.below(n)].report.counts;
    const MetricsReport m = metrics(pooled);
    samples[0][r] = m.accuracy;
    samples[1][r] = m.precision;
    samples[2][r] = m.recall;
    samples[3][r] = m.f1;
  });

  ConfusionCounts all;
  for (const auto& s : per_student) all += s.report.counts;
  const MetricsReport point = metrics(all);
  const std::array<double, 4> points{point.accuracy, point.precision, point.recall, point.f1};

  const double alpha = 1.0 - level;
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(r_count) - 1e-9));
    return std::clamp<std::size_t>(k, 1, r_count) - 1;
  };
  std::array<Interval, 4> out;
  for (std::size_t m = 0; m < 4; ++m) {
    std::sort(samples[m].begin(), samples[m].end());
    out[m].point = points[m];
    out[m].lo = std::min(samples[m][rank(alpha / 2)], points[m]);
    out[m].hi = std::max(samples[m][rank(1 - alpha / 2)], points[m]);
  }
  return {out[0], out[1], out[2], out[3]};
}

std::vector<ComparisonRow> compare_predictors(const std::vector<MethodPredictions>& methods,
                                              const std::vector<GroundTruthRecord>& truth,
                                              const ComparisonOptions& options) {
  std::vector<ComparisonRow> rows;
  for (const auto& m : methods) {
    ComparisonRow row;
    row.method = m.method;
    const ConfusionTable table = confusion(m.decisions, truth);
    row.micro = metrics(table.micro);
    for (std::size_t i = 0; i < kInterventionCount; ++i)
      row.per_intervention[i] = metrics(table.per_intervention[i], MetricScope::PerIntervention);
    row.intervals = bootstrap_ci(per_student_metrics(m.decisions, truth), options.level, options.resamples,
                                 options.seed, options.workers);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "method\taccuracy\tprecision\trecall\tf1\taccuracy_ci\tprecision_ci\trecall_ci\tf1_ci\n";
  for (const auto& r : rows) {
    const auto& iv = r.intervals;
    out << r.method << '\t' << fixed(r.micro.accuracy) << '\t' << fixed(r.micro.precision) << '\t'
        << fixed(r.micro.recall) << '\t' << fixed(r.micro.f1);
    for (const Interval* i : {&iv.accuracy, &iv.precision, &iv.recall, &iv.f1})
      out << '\t' << fixed(i->lo) << '-' << fixed(i->hi);
    out << '\n';
  }
}

std::string comparison_json(const std::vector<ComparisonRow>& rows, const ComparisonOptions& options) {
  using nlohmann::json;
  auto report_json = [](const MetricsReport& m) {
    return json{{"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"counts", {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn}}}};
  };
  auto interval_json = [](const Interval& i) {
    return json{{"point", i.point}, {"lo", i.lo}, {"hi", i.hi}, {"half_width", i.half_width()}};
  };
  json methods = json::array();
  for (const auto& r : rows) {
    json per = json::object();
    for (std::size_t i = 0; i < kInterventionCount; ++i)
      per[std::string(FlagTraits<Intervention>::codes[i])] = report_json(r.per_intervention[i]);
    methods.push_back({{"method", r.method},
                       {"micro", report_json(r.micro)},
                       {"intervals",
                        {{"accuracy", interval_json(r.intervals.accuracy)},
                         {"precision", interval_json(r.intervals.precision)},
                         {"recall", interval_json(r.intervals.recall)},
                         {"f1", interval_json(r.intervals.f1)}}},
                       {"per_intervention", per}});
  }
  json doc = {{"level", options.level},
              {"resamples", options.resamples},
              {"seed", options.seed},
              {"averaging", "micro"},
              {"methods", methods}};
  return doc.dump(2);
}

std::vector<GroundTruthRecord> ground_truth_from(const std::vector<WeeklyDecision>& decisions, std::string_view labeler) {
  std::vector<GroundTruthRecord> out;
  out.reserve(decisions.size());
  for (const auto& d : decisions) out.push_back({d.student_id, d.semester_week, d.interventions, std::string(labeler)});
  return out;
}

void write_labels(std::ostream& out, const std::vector<GroundTruthRecord>& records) {
  out << "student_id\tsemester_week\tinterventions\tlabeler\n";
  for (const auto& r : records)
    out << text::escape_cell(r.student_id) << '\t' << r.semester_week << '\t' << r.labeled_interventions.encode() << '\t'
        << text::escape_cell(r.labeler) << '\n';
}

std::vector<GroundTruthRecord> read_labels(std::string_view content) {
  std::vector<GroundTruthRecord> out;
  const auto lines = text::split(content, '\n');
  bool header = true;
  std::size_t line_no = 0;
  for (const auto& raw : lines) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("student_id\t", 0) == 0) continue;
    }
    const auto cells = text::split(line, '\t');
    if (cells.size() != 4) throw Error("labels line " + std::to_string(line_no) + ": expected 4 columns");
    GroundTruthRecord r;
    r.student_id = text::unescape_cell(cells[0]);
    try {
      r.semester_week = std::stoi(cells[1]);
    } catch (...) {
      throw Error("labels line " + std::to_string(line_no) + ": bad week '" + cells[1] + "'");
    }
    r.labeled_interventions = InterventionSet::decode(cells[2]);
    r.labeler = text::unescape_cell(cells[3]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace csguide
