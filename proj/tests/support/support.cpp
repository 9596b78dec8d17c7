#include "support.hpp"

#include <algorithm>
#include <sstream>

#include "csguide/text.hpp"

#ifndef CSGUIDE_SOURCE_DIR
#define CSGUIDE_SOURCE_DIR "."
#endif

namespace csguide::testing {

namespace fs = std::filesystem;

fs::path source_dir() { return CSGUIDE_SOURCE_DIR; }
fs::path data_path(const std::string& name) { return source_dir() / "data" / name; }
fs::path fixture_path(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }

AcademicCalendar standard_calendar() { return load_calendar(data_path("calendar.conf")); }
CourseCatalog standard_catalog() { return CourseCatalog::load(data_path("catalog.conf")); }
RuleEngine standard_engine() {
  return {RuleTable::load(data_path("rule_table.json")), ConflictOverlay::load(data_path("conflict_overlay.json"))};
}

StudentSemester random_semester(Rng& rng, const CourseCatalog& catalog, const std::string& student_id) {
  AcademicCalendar cal;
  cal.semester_id = "random";
  cal.final_week = 12 + static_cast<int>(rng.below(5));
  cal.weeks = cal.final_week;
  cal.drop_deadline_week = 2 + static_cast<int>(rng.below(4));
  cal.late_drop_deadline_week = cal.drop_deadline_week + 2 + static_cast<int>(rng.below(4));
  cal.week_offset_map = AcademicCalendar::default_week_map(cal.final_week, {});
  cal.validate();

  std::vector<std::string> pool;
  for (const auto& [code, entry] : catalog.entries()) pool.push_back(code);
  pool.push_back("XYZ1000");
  rng.shuffle(pool.begin(), pool.end());
  const std::size_t load = 2 + rng.below(4);

  struct Course {
    std::string code;
    int post_week;
    int drop_week;
    int level;
  };
  std::vector<Course> courses;
  for (std::size_t i = 0; i < load; ++i) {
    Course c{pool[i], 1 + static_cast<int>(rng.below(cal.final_week + 1)), cal.final_week + 1,
             static_cast<int>(rng.below(12))};
    if (rng.bernoulli(0.2)) c.drop_week = 2 + static_cast<int>(rng.below(cal.final_week - 1));
    courses.push_back(c);
  }
  const double miss_rate = std::array<double, 4>{0.0, 0.1, 0.3, 0.6}[rng.below(4)];

  std::vector<WeeklyReport> raw;
  for (int w = 1; w <= cal.final_week; ++w) {
    for (auto& c : courses)
      if (rng.bernoulli(0.3)) c.level = std::clamp(c.level + static_cast<int>(rng.below(5)) - 2, 0, 11);
    if (rng.bernoulli(miss_rate)) continue;
    WeeklyReport r;
    r.student_id = student_id;
    r.report_week = w;
    for (const auto& c : courses) {
      if (w >= c.drop_week) continue;
      GradeStatus s = GradeStatus::not_yet_posted();
      if (w >= c.post_week && !rng.bernoulli(0.1)) s = GradeStatus::reported(static_cast<LetterGrade>(c.level));
      r.courses.push_back({c.code, s});
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) {
    WeeklyReport r;
    r.student_id = student_id;
    r.report_week = 1;
    raw.push_back(r);
  }
  auto aligned = align_weeks(raw, cal);
  StudentSemester sem = build_student_semester(aligned, cal, catalog);
  sem.student_id = student_id;
  for (auto& r : sem.reports) r.student_id = student_id;
  return sem;
}

QuantFeatures quant_oracle(const StudentSemester& s, int week, const CourseCatalog& catalog) {
  const AcademicCalendar& cal = s.calendar;
  const WeeklyReport& report = s.reports[week - 1];
  QuantFeatures f;

  auto any_below = [&](LetterGrade limit) {
    for (const auto& c : report.courses)
      if (c.status.kind == GradeStatusKind::Reported && c.status.grade < limit) return true;
    return false;
  };
  auto any_pending = [&] {
    for (const auto& c : report.courses)
      if (c.status.kind == GradeStatusKind::NotYetPosted) return true;
    return false;
  };

  if (!report.missing && week == cal.drop_deadline_week - 1) {
    if (any_below(LetterGrade::BMinus)) f.set(QuantFlag::G1_1);
    if (any_pending()) f.set(QuantFlag::G1_2);
  }
  if (!report.missing && week == cal.late_drop_deadline_week - 1) {
    if (any_below(LetterGrade::BMinus)) f.set(QuantFlag::G2_1);
    if (any_pending()) f.set(QuantFlag::G2_2);
  }

  if (week == cal.final_week) {
    std::vector<std::string> codes;
    for (const auto& r : s.reports)
      for (const auto& c : r.courses)
        if (std::find(codes.begin(), codes.end(), c.code) == codes.end()) codes.push_back(c.code);
    for (const auto& code : codes) {
      bool status_seen = false, excluded = false, graded = false;
      LetterGrade last = LetterGrade::A;
      for (int w = week; w >= 1; --w) {
        const WeeklyReport& r = s.reports[w - 1];
        if (r.missing) continue;
        for (const auto& c : r.courses) {
          if (c.code != code) continue;
          if (!status_seen) {
            status_seen = true;
            excluded = c.status.kind == GradeStatusKind::Dropped || c.status.kind == GradeStatusKind::PassFail;
          }
          if (!graded && c.status.kind == GradeStatusKind::Reported) {
            graded = true;
            last = c.status.grade;
          }
        }
      }
      if (excluded || !graded) continue;
      if (last < LetterGrade::BMinus) f.set(QuantFlag::G3_1);
      if (last < LetterGrade::CMinus) f.set(QuantFlag::G3_2);
      if (last < LetterGrade::CMinus && catalog.categorize(code) == CourseCategory::CSTrackSTEM)
        f.set(QuantFlag::G3_3);
    }
  }

  int run = 0;
  for (int w = week; w >= 1 && s.reports[w - 1].missing; --w) ++run;
  if (run == 1) f.set(QuantFlag::M1_1);
  if (run == 2 && week <= cal.late_drop_deadline_week) f.set(QuantFlag::M1_2);
  if (run == 3) f.set(QuantFlag::M1_3);
  if (run >= 4) f.set(QuantFlag::M1_4);
  if (report.missing && week == cal.drop_deadline_week - 1) f.set(QuantFlag::M2_1);
  if (report.missing && week == cal.late_drop_deadline_week - 1) f.set(QuantFlag::M2_2);
  return f;
}

namespace {

InterventionSet parse_set(const std::string& cell) {
  return cell == "-" ? InterventionSet{} : InterventionSet::decode(cell);
}

}  // namespace

std::vector<Scenario> load_scenarios(const fs::path& path) {
  std::vector<Scenario> out;
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("==", 0) == 0) {
      out.push_back({text::trim(line.substr(2)), {}});
      continue;
    }
    if (out.empty()) throw Error("scenario line " + std::to_string(line_no) + " before any header");
    std::istringstream cols(line);
    std::string week, missing, flags, expected, suppressed, added;
    if (!(cols >> week >> missing >> flags >> expected >> suppressed >> added))
      throw Error("scenario line " + std::to_string(line_no) + " needs six columns");
    ScenarioWeek sw;
    sw.week = std::stoi(week);
    sw.missing = missing == "y";
    if (flags != "-")
      for (const auto& code : text::split(flags, ',')) {
        if (auto q = try_parse_code<QuantFlag>(code)) sw.quant.set(*q);
        else sw.qual.set(parse_code<QualFlag>(code));
      }
    sw.expected = parse_set(expected);
    sw.suppressed = parse_set(suppressed);
    sw.added = parse_set(added);
    auto& weeks = out.back().weeks;
    if (!weeks.empty() && sw.week <= weeks.back().week)
      throw Error("scenario line " + std::to_string(line_no) + ": weeks must increase");
    while (static_cast<int>(weeks.size()) + 1 < sw.week) weeks.push_back({static_cast<int>(weeks.size()) + 1});
    weeks.push_back(sw);
  }
  return out;
}

std::string check_scenario(const RuleEngine& engine, const Scenario& scenario) {
  StudentSemester sem;
  sem.student_id = scenario.name;
  sem.calendar = standard_calendar();
  std::vector<QuantFeatures> quant;
  std::vector<QualFeatures> qual;
  for (const auto& w : scenario.weeks) {
    WeeklyReport r = w.missing ? WeeklyReport::missing_week(scenario.name, w.week) : WeeklyReport{};
    r.student_id = scenario.name;
    r.semester_week = r.report_week = w.week;
    sem.reports.push_back(r);
    quant.push_back(w.quant);
    qual.push_back(w.qual);
  }
  const auto decisions = engine.run_semester(sem, quant, qual);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    const auto& w = scenario.weeks[i];
    std::string diff;
    if (d.interventions != w.expected)
      diff += " interventions {" + d.interventions.encode() + "} expected {" + w.expected.encode() + "}";
    if (d.suppressed() != w.suppressed)
      diff += " suppressed {" + d.suppressed().encode() + "} expected {" + w.suppressed.encode() + "}";
    if (d.added() != w.added) diff += " added {" + d.added().encode() + "} expected {" + w.added.encode() + "}";
    if (!diff.empty()) return scenario.name + " week " + std::to_string(w.week) + ":" + diff;
  }
  return {};
}

std::vector<ClosureRow> load_closures(const fs::path& path) {
  std::vector<ClosureRow> out;
  for (const auto& line : text::split(read_file(path), '\n')) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = text::split(line, '\t');
    if (cells.size() != 2) throw Error("closure fixture: malformed line '" + line + "'");
    out.push_back({Trigger::parse(cells[0]), InterventionSet::decode(cells[1])});
  }
  return out;
}

}  // namespace csguide::testing
