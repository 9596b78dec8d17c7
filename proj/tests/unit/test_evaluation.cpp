#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "csguide/evaluation.hpp"
#include "support.hpp"

using namespace csguide;
using namespace csguide::testing;

namespace {

WeeklyDecision decision(const std::string& id, int week, InterventionSet set) {
  WeeklyDecision d;
  d.student_id = id;
  d.semester_week = week;
  d.interventions = set;
  return d;
}

GroundTruthRecord truth(const std::string& id, int week, InterventionSet set) {
  return {id, week, set, "tester"};
}

InterventionSet random_set(Rng& rng, double p) {
  InterventionSet s;
  for (std::size_t k = 0; k < InterventionSet::size; ++k) s.set_index(k, rng.bernoulli(p));
  return s;
}

struct Pair {
  std::vector<WeeklyDecision> predictions;
  std::vector<GroundTruthRecord> truth;
};

Pair random_pair(std::size_t students, int weeks, std::uint64_t seed) {
  Rng rng(seed);
  Pair p;
  for (std::size_t s = 0; s < students; ++s) {
    const double noise = rng.uniform(0.0, 0.2);
    for (int w = 1; w <= weeks; ++w) {
      const auto t = random_set(rng, 0.2);
      const auto flip = random_set(rng, noise);
      const std::string id = "S" + std::to_string(s);
      p.truth.push_back(truth(id, w, t));
      p.predictions.push_back(decision(id, w, (t - flip) | (flip - t)));
    }
  }
  return p;
}

}  // namespace

TEST_CASE("metrics of a hand-counted matrix") {
  const auto m = metrics({.tp = 6, .tn = 10, .fp = 2, .fn = 2});
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.75));
  CHECK(m.f1 == doctest::Approx(0.75));
  const auto silent = metrics({.tn = 5});
  CHECK(silent.accuracy == 1.0);
  CHECK(silent.precision == 0.0);
  CHECK(silent.recall == 0.0);
  CHECK(silent.f1 == 0.0);
  CHECK_THROWS_AS(metrics({}), Error);
  CHECK_THROWS_AS(metrics({.tp = -1, .tn = 3}), Error);
}

TEST_CASE("confusion counts every cell once") {
  const std::vector<WeeklyDecision> pred{decision("A", 1, {Intervention::S1, Intervention::R1}),
                                         decision("A", 2, {})};
  const std::vector<GroundTruthRecord> gt{truth("A", 2, {Intervention::C1_1}),
                                          truth("A", 1, {Intervention::S1, Intervention::C3})};
  const auto table = confusion(pred, gt);
  CHECK(table.micro == ConfusionCounts{.tp = 1, .tn = 2 * static_cast<long>(kInterventionCount) - 4, .fp = 1, .fn = 2});
  CHECK(table.per_intervention[static_cast<std::size_t>(Intervention::S1)].tp == 1);
  CHECK(table.per_intervention[static_cast<std::size_t>(Intervention::R1)].fp == 1);
  CHECK(table.per_intervention[static_cast<std::size_t>(Intervention::C1_1)].fn == 1);
  ConfusionCounts sum;
  for (const auto& c : table.per_intervention) sum += c;
  CHECK(sum == table.micro);
}

TEST_CASE("key mismatches list both directions") {
  const std::vector<WeeklyDecision> pred{decision("A", 1, {}), decision("B", 1, {})};
  const std::vector<GroundTruthRecord> gt{truth("A", 1, {}), truth("C", 4, {})};
  try {
    confusion(pred, gt);
    FAIL("expected KeyMismatch");
  } catch (const KeyMismatch& e) {
    CHECK(e.missing() == std::vector<std::string>{"C:4"});
    CHECK(e.extra() == std::vector<std::string>{"B:1"});
  }
  CHECK_THROWS_AS(confusion({decision("A", 1, {}), decision("A", 1, {})}, {truth("A", 1, {})}), Error);
}

TEST_CASE("per-student counts pool to the micro counts") {
  const auto p = random_pair(30, 12, 1);
  const auto per = per_student_metrics(p.predictions, p.truth);
  REQUIRE(per.size() == 30);
  CHECK(per[0].student_id == "S0");
  ConfusionCounts pooled;
  for (const auto& s : per) pooled += s.report.counts;
  CHECK(pooled == confusion(p.predictions, p.truth).micro);
}

TEST_CASE("bootstrap intervals") {
  const auto p = random_pair(40, 12, 2);
  const auto per = per_student_metrics(p.predictions, p.truth);
  const auto ci = bootstrap_ci(per, 0.9, 500, 3);
  const auto point = metrics(confusion(p.predictions, p.truth).micro);
  for (const auto& [iv, value] : {std::pair{ci.accuracy, point.accuracy}, std::pair{ci.precision, point.precision},
                                  std::pair{ci.recall, point.recall}, std::pair{ci.f1, point.f1}}) {
    CHECK(iv.point == doctest::Approx(value));
    CHECK(iv.lo <= iv.point);
    CHECK(iv.point <= iv.hi);
    CHECK(iv.half_width() < 0.1);
  }
  const auto again = bootstrap_ci(per, 0.9, 500, 3, 4);
  CHECK(again.f1.lo == ci.f1.lo);
  CHECK(again.f1.hi == ci.f1.hi);
  const auto wider = bootstrap_ci(per, 0.99, 500, 3);
  CHECK(wider.f1.half_width() >= ci.f1.half_width());

  CHECK_THROWS_AS(bootstrap_ci({per[0]}, 0.9, 500, 3), InsufficientUnits);
  CHECK_THROWS_AS(bootstrap_ci(per, 0.9, 10, 3), InsufficientUnits);
  CHECK_THROWS_AS(bootstrap_ci(per, 1.0, 500, 3), Error);
}

TEST_CASE("perfect predictions have degenerate intervals at one") {
  auto p = random_pair(10, 5, 4);
  for (std::size_t i = 0; i < p.truth.size(); ++i) p.predictions[i].interventions = p.truth[i].labeled_interventions;
  const auto ci = bootstrap_ci(per_student_metrics(p.predictions, p.truth), 0.9, 200, 1);
  CHECK(ci.f1.lo == 1.0);
  CHECK(ci.f1.hi == 1.0);
}

TEST_CASE("comparison report") {
  const auto p = random_pair(20, 8, 5);
  const auto q = random_pair(20, 8, 6);
  ComparisonOptions o;
  o.resamples = 200;
  const auto rows = compare_predictors({{"a", p.predictions}, {"b", q.predictions}}, p.truth, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "a");
  CHECK(rows[0].micro.f1 == doctest::Approx(rows[0].intervals.f1.point));
  std::ostringstream table;
  write_comparison_table(table, rows);
  CHECK(table.str().find("a\t") != std::string::npos);
  CHECK(table.str().find("b\t") != std::string::npos);
  const auto doc = nlohmann::json::parse(comparison_json(rows, o));
  CHECK(doc.dump().find("per_intervention") != std::string::npos);
}

TEST_CASE("labels round-trip") {
  const auto p = random_pair(6, 4, 7);
  std::ostringstream out;
  write_labels(out, p.truth);
  CHECK(read_labels(out.str()) == p.truth);
  CHECK_THROWS_AS(read_labels("student_id\tsemester_week\tinterventions\tlabeler\nA\tx\tS1\tme\n"), Error);
  const auto gt = ground_truth_from(p.predictions, "rules");
  REQUIRE(gt.size() == p.predictions.size());
  CHECK(gt[0].labeler == "rules");
  CHECK(gt[0].labeled_interventions == p.predictions[0].interventions);
}
