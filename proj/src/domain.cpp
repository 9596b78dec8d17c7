#include "csguide/domain.hpp"

#include <iterator>

namespace csguide {

namespace {

constexpr std::array<std::string_view, 12> kGradeText = {"F",  "D-", "D",  "D+", "C-", "C",
                                                         "C+", "B-", "B",  "B+", "A-", "A"};

}  // namespace

std::string_view to_string(LetterGrade g) noexcept { return kGradeText[static_cast<std::size_t>(g)]; }

std::optional<LetterGrade> parse_grade(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kGradeText.size(); ++i)
    if (kGradeText[i] == text) return static_cast<LetterGrade>(i);
  return std::nullopt;
}

std::string encode_status(const GradeStatus& s) {
  switch (s.kind) {
    case GradeStatusKind::Reported: return std::string(to_string(s.grade));
    case GradeStatusKind::NotYetPosted: return "NYP";
    case GradeStatusKind::Dropped: return "DROP";
    case GradeStatusKind::PassFail: return "PF";
    case GradeStatusKind::ReportMissing: return "MISSING";
  }
  return "NYP";
}

GradeStatus decode_status(std::string_view token) {
  if (auto g = parse_grade(token)) return GradeStatus::reported(*g);
  if (token == "NYP") return GradeStatus::not_yet_posted();
  if (token == "DROP") return GradeStatus::dropped();
  if (token == "PF") return GradeStatus::pass_fail();
  if (token == "MISSING") return GradeStatus::report_missing();
  throw UnknownCode(token);
}

std::string_view to_string(CourseCategory c) noexcept {
  switch (c) {
    case CourseCategory::CSTrackCore: return "core";
    case CourseCategory::CSTrackSTEM: return "stem";
    case CourseCategory::OtherElectives: return "elective";
  }
  return "elective";
}

CourseCategory parse_category(std::string_view text) {
  if (text == "core") return CourseCategory::CSTrackCore;
  if (text == "stem") return CourseCategory::CSTrackSTEM;
  if (text == "elective") return CourseCategory::OtherElectives;
  throw UnknownCode(text);
}

void AcademicCalendar::validate() const {
  if (weeks < 10) throw InvalidCalendar("calendar '" + semester_id + "': weeks must be >= 10");
  if (!(1 <= drop_deadline_week && drop_deadline_week < late_drop_deadline_week &&
        late_drop_deadline_week < final_week && final_week <= weeks))
    throw InvalidCalendar("calendar '" + semester_id +
                          "': require 1 <= drop < late_drop < final <= weeks");
  int prev_semester = 0;
  for (const auto& [report_week, semester_week] : week_offset_map) {
    if (holiday_weeks.count(report_week))
      throw InvalidCalendar("report week " + std::to_string(report_week) + " is both mapped and a holiday");
    if (semester_week <= prev_semester)
      throw InvalidCalendar("week map must be injective and increasing (report week " +
                            std::to_string(report_week) + ")");
    prev_semester = semester_week;
  }
}

std::map<int, int> AcademicCalendar::default_week_map(int final_week, const std::set<int>& holidays) {
  std::map<int, int> out;
  int semester_week = 1;
  for (int report_week = 1; semester_week <= final_week; ++report_week) {
    if (holidays.count(report_week)) continue;
    out.emplace(report_week, semester_week++);
  }
  return out;
}

Trigger Trigger::parse(std::string_view code) {
  if (auto q = try_parse_code<QuantFlag>(code)) return of(*q);
  if (auto q = try_parse_code<QualFlag>(code)) return of(*q);
  throw UnknownCode(code);
}

std::vector<Trigger> fired_triggers(const QuantFeatures& quant, const QualFeatures& qual) {
  std::vector<Trigger> out;
  for (QuantFlag f : quant.members()) out.push_back(Trigger::of(f));
  for (QualFlag f : qual.members()) out.push_back(Trigger::of(f));
  return out;
}

}  // namespace csguide
