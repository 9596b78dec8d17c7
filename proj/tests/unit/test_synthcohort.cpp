#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "csguide/quant_features.hpp"
#include "csguide/synthcohort.hpp"
#include "support.hpp"

using namespace csguide;
using namespace csguide::testing;

namespace {

const PhraseBank& bank() {
  static const PhraseBank b = PhraseBank::load(data_path("phrase_bank.json"));
  return b;
}

const RuleEngine& engine() {
  static const RuleEngine e = standard_engine();
  return e;
}

CohortConfig config(int students, std::uint64_t seed) {
  CohortConfig c;
  c.student_count = students;
  c.calendar = standard_calendar();
  c.catalog = standard_catalog();
  c.archetype_mix = default_archetype_mix();
  c.seed = seed;
  return c;
}

std::string corpus_text(const std::vector<StudentSemester>& s) {
  std::ostringstream out;
  write_corpus(out, s);
  return out.str();
}

}  // namespace

TEST_CASE("archetype names round-trip") {
  for (auto a : kAllArchetypes) CHECK(parse_archetype(to_string(a)) == a);
  CHECK_THROWS_AS(parse_archetype("wizard"), InvalidConfig);
}

TEST_CASE("config validation") {
  auto c = config(10, 1);
  CHECK_NOTHROW(c.validate());
  c.student_count = -1;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = config(10, 1);
  c.archetype_mix[Archetype::Ill] += 0.2;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = config(10, 1);
  c.noise.typo_rate = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = config(10, 1);
  c.noise.late_posting_weeks = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  CHECK_THROWS_AS(PhraseBank::parse_json("{}"), Error);
}

TEST_CASE("default mix sums to one") {
  double total = 0;
  for (const auto& [a, p] : default_archetype_mix()) total += p;
  CHECK(total == doctest::Approx(1.0));
  CHECK(default_archetype_mix().size() == kAllArchetypes.size());
}

TEST_CASE("cohorts are deterministic and independent of workers") {
  const auto a = generate_cohort(config(25, 9), bank(), engine(), 1);
  const auto b = generate_cohort(config(25, 9), bank(), engine(), 3);
  CHECK(corpus_text(a.semesters) == corpus_text(b.semesters));
  CHECK(a.labels == b.labels);
  CHECK(a.true_qual == b.true_qual);
  const auto c = generate_cohort(config(25, 10), bank(), engine(), 1);
  CHECK(corpus_text(a.semesters) != corpus_text(c.semesters));
}

TEST_CASE("cohort shape and labels follow the rule engine") {
  auto cfg = config(40, 3);
  cfg.id_prefix = "Q";
  const auto cohort = generate_cohort(cfg, bank(), engine());
  REQUIRE(cohort.semesters.size() == 40);
  REQUIRE(cohort.true_qual.size() == 40);
  REQUIRE(cohort.traces.size() == 40);
  CHECK(cohort.semesters[0].student_id.rfind("Q", 0) == 0);
  CHECK(cohort.labels.size() == 40u * static_cast<std::size_t>(cfg.calendar.final_week));
  std::size_t k = 0;
  for (std::size_t s = 0; s < cohort.semesters.size(); ++s) {
    const auto& sem = cohort.semesters[s];
    REQUIRE(sem.reports.size() == static_cast<std::size_t>(cfg.calendar.final_week));
    const auto decisions = engine().run_semester(sem, extract_quant(sem, cfg.catalog), cohort.true_qual[s]);
    for (const auto& d : decisions) {
      const auto& label = cohort.labels[k++];
      CHECK(label.student_id == d.student_id);
      CHECK(label.semester_week == d.semester_week);
      CHECK(label.labeled_interventions == d.interventions);
    }
    for (std::size_t w = 0; w < sem.reports.size(); ++w) {
      CHECK(sem.reports[w].missing == cohort.traces[s].weeks[w].missed);
      if (sem.reports[w].missing) CHECK(cohort.true_qual[s][w].none());
    }
  }
}

TEST_CASE("archetype frequencies track the mix") {
  const auto cohort = generate_cohort(config(1200, 5), bank(), engine(), 2);
  std::map<Archetype, int> counts;
  for (const auto& t : cohort.traces) ++counts[t.archetype];
  for (const auto& [a, p] : default_archetype_mix()) {
    CAPTURE(to_string(a));
    CHECK(std::abs(counts[a] / 1200.0 - p) < 0.04);
  }
}

TEST_CASE("raw reports rebuild the same semester") {
  const auto cohort = generate_cohort(config(30, 6), bank(), engine());
  const auto catalog = standard_catalog();
  for (const auto& sem : cohort.semesters) {
    const auto raw = align_weeks(to_raw_reports(sem), sem.calendar);
    CHECK(build_student_semester(raw, sem.calendar, catalog) == sem);
  }
}

TEST_CASE("noise injection") {
  const auto cohort = generate_cohort(config(30, 7), bank(), engine());
  const auto catalog = standard_catalog();
  CHECK(corpus_text(inject_noise(cohort.semesters, {}, catalog, 1)) == corpus_text(cohort.semesters));

  NoiseConfig skip;
  skip.skipped_journal_rate = 1.0;
  for (const auto& sem : inject_noise(cohort.semesters, skip, catalog, 1))
    for (const auto& r : sem.reports) CHECK(r.journals_empty());

  NoiseConfig heavy;
  heavy.late_posting_rate = 0.5;
  heavy.late_posting_weeks = 2;
  heavy.typo_rate = 0.5;
  const auto a = inject_noise(cohort.semesters, heavy, catalog, 2);
  CHECK(corpus_text(a) == corpus_text(inject_noise(cohort.semesters, heavy, catalog, 2)));
  CHECK(corpus_text(a) != corpus_text(cohort.semesters));
  REQUIRE(a.size() == cohort.semesters.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    REQUIRE(a[s].reports.size() == cohort.semesters[s].reports.size());
    for (std::size_t w = 0; w < a[s].reports.size(); ++w)
      CHECK(a[s].reports[w].missing == cohort.semesters[s].reports[w].missing);
  }
  NoiseConfig bad;
  bad.skipped_journal_rate = -0.1;
  CHECK_THROWS_AS(inject_noise(cohort.semesters, bad, catalog, 1), InvalidConfig);
}
