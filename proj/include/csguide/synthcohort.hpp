#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/evaluation.hpp"
#include "csguide/ingestion.hpp"
#include "csguide/rule_engine.hpp"

namespace csguide {

class InvalidConfig : public Error {
public:
  using Error::Error;
};

enum class Archetype : std::uint8_t { Thriving, StrugglingAcademic, Ill, Overcommitted, Disengaged, Transitioning };

inline constexpr std::array<Archetype, 6> kAllArchetypes = {Archetype::Thriving,      Archetype::StrugglingAcademic,
                                                            Archetype::Ill,           Archetype::Overcommitted,
                                                            Archetype::Disengaged,    Archetype::Transitioning};

std::string_view to_string(Archetype a) noexcept;
Archetype parse_archetype(std::string_view text);

/// Sentences per qualitative flag plus flag-free filler.
struct PhraseBank {
  std::vector<std::string> courses;
  std::vector<std::string> cs_courses;
  std::map<QualFlag, std::vector<std::string>> positive;  // illness sentences are keyed H1.1
  std::vector<std::string> neutral;

  static PhraseBank parse_json(std::string_view content);
  static PhraseBank load(const std::filesystem::path& path);
};

struct NoiseConfig {
  double late_posting_rate = 0.0;  // per (student, course)
  int late_posting_weeks = 1;
  double typo_rate = 0.0;  // per (student, course)
  double skipped_journal_rate = 0.0;  // per present report

  void validate() const;
};

struct CohortConfig {
  int student_count = 0;
  AcademicCalendar calendar;
  CourseCatalog catalog;
  std::map<Archetype, double> archetype_mix;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  std::string id_prefix = "S";

  /// Throws InvalidConfig.
  void validate() const;
};

/// Default mix used by the command line and the benchmarks.
std::map<Archetype, double> default_archetype_mix();

struct LatentWeek {
  QualFeatures qual;  // true flags after illness promotion
  bool missed = false;
  std::map<std::string, int> grade_levels;  // course -> LetterGrade index, posted courses only
};

struct LatentTrace {
  std::string student_id;
  Archetype archetype = Archetype::Thriving;
  std::vector<LatentWeek> weeks;
};

struct SyntheticCohort {
  std::vector<StudentSemester> semesters;
  std::vector<std::vector<QualFeatures>> true_qual;  // per student, per week
  std::vector<GroundTruthRecord> labels;
  std::vector<LatentTrace> traces;
};

/// Deterministic per seed; each student uses a sub-seed derived from the
/// master seed and its index, so output does not depend on `workers`.
SyntheticCohort generate_cohort(const CohortConfig& config, const PhraseBank& bank, const RuleEngine& engine,
                                unsigned workers = 1);

/// Late posting, course-code typos and skipped journals. Statuses are
/// re-resolved through the catalog after corruption.
std::vector<StudentSemester> inject_noise(const std::vector<StudentSemester>& corpus, const NoiseConfig& noise,
                                          const CourseCatalog& catalog, std::uint64_t seed);

/// Raw reports that reproduce `semester` through build_student_semester.
std::vector<WeeklyReport> to_raw_reports(const StudentSemester& semester);

}  // namespace csguide
