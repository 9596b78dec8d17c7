#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/ingestion.hpp"
#include "csguide/random.hpp"
#include "csguide/rule_engine.hpp"

namespace csguide::testing {

std::filesystem::path source_dir();
std::filesystem::path data_path(const std::string& name);
std::filesystem::path fixture_path(const std::string& name);

AcademicCalendar standard_calendar();
CourseCatalog standard_catalog();
RuleEngine standard_engine();

/// Random calendar, course load, grade walk, drops and missing weeks, resolved
/// through build_student_semester.
StudentSemester random_semester(Rng& rng, const CourseCatalog& catalog, const std::string& student_id);

/// Direct re-reading of the quantitative trigger definitions, week by week.
QuantFeatures quant_oracle(const StudentSemester& semester, int week, const CourseCatalog& catalog);

struct ScenarioWeek {
  int week = 0;
  bool missing = false;
  QuantFeatures quant;
  QualFeatures qual;
  InterventionSet expected;
  InterventionSet suppressed;
  InterventionSet added;
};

struct Scenario {
  std::string name;
  std::vector<ScenarioWeek> weeks;  // every week from 1 to the last listed one
};

std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

/// Empty string when the scenario passes, otherwise a description of the
/// first differing week.
std::string check_scenario(const RuleEngine& engine, const Scenario& scenario);

struct ClosureRow {
  Trigger trigger;
  InterventionSet expected;
};

std::vector<ClosureRow> load_closures(const std::filesystem::path& path);

}  // namespace csguide::testing
