#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csguide/domain.hpp"

namespace csguide {

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

/// `key = value` lines; '#' starts a comment. Keys keep file order.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Calendar keys: semester_id, weeks, drop_deadline_week,
/// late_drop_deadline_week, final_week, holiday_weeks (comma list of report
/// weeks), week_map (optional comma list of `report:semester` pairs; defaults
/// to the identity map with holidays skipped).
AcademicCalendar parse_calendar(std::string_view content);
AcademicCalendar load_calendar(const std::filesystem::path& path);
std::string format_calendar(const AcademicCalendar& calendar);

struct CatalogEntry {
  CourseCategory category = CourseCategory::OtherElectives;
  std::string title;
  bool pass_fail = false;
};

/// Catalog lines: `CODE = category | title [| pass_fail]` with category one of
/// core, stem, elective. Unlisted codes are OtherElectives.
class CourseCatalog {
public:
  CourseCatalog() = default;
  explicit CourseCatalog(std::map<std::string, CatalogEntry> entries);

  static CourseCatalog parse(std::string_view content);
  static CourseCatalog load(const std::filesystem::path& path);
  std::string format() const;

  CourseCategory categorize(std::string_view code) const;
  bool is_pass_fail(std::string_view code) const;
  const std::map<std::string, CatalogEntry>& entries() const noexcept { return entries_; }

private:
  std::map<std::string, CatalogEntry> entries_;
};

inline CourseCategory categorize_course(std::string_view code, const CourseCatalog& catalog) {
  return catalog.categorize(code);
}

/// Uppercases and removes whitespace and invisible characters from a course
/// code cell.
std::string normalize_course_code(std::string_view raw);

// ---------------------------------------------------------------------------
// Report parsing
// ---------------------------------------------------------------------------

struct ReportFormat {
  char delimiter = '\t';
};

struct IngestIssue {
  enum class Severity { Warning, Error };
  Severity severity = Severity::Warning;
  int row = 0;  // 1-based data row; 0 when not tied to a row
  std::string kind;
  std::string student_id;
  int week = 0;
  std::string reason;

  bool is_error() const noexcept { return severity == Severity::Error; }
};

struct ParseOutput {
  std::vector<WeeklyReport> reports;
  std::vector<IngestIssue> issues;
};

/// Header columns: student_id, report_week, course_N/grade_N pairs (any N),
/// journal_cs, journal_noncs, journal_personal. Malformed rows are reported
/// as Error issues and skipped; everything else is returned. Raw grade
/// statuses are Reported or NotYetPosted (empty cell).
ParseOutput parse_reports(std::string_view content, const ReportFormat& format = {});
ParseOutput parse_reports_file(const std::filesystem::path& path, const ReportFormat& format = {});

/// Writes the raw report format read by parse_reports. Missing reports are
/// omitted.
void write_reports(std::ostream& out, const std::vector<WeeklyReport>& reports, const ReportFormat& format = {});

// ---------------------------------------------------------------------------
// Alignment and resolution
// ---------------------------------------------------------------------------

class UnmappedWeek : public Error {
public:
  explicit UnmappedWeek(int report_week)
      : Error("report week " + std::to_string(report_week) + " is not in the calendar"),
        report_week_(report_week) {}
  int report_week() const noexcept { return report_week_; }

private:
  int report_week_;
};

class DuplicateWeek : public Error {
public:
  DuplicateWeek(std::string student_id, int week)
      : Error("duplicate report for student '" + student_id + "' in semester week " + std::to_string(week)),
        student_id_(std::move(student_id)),
        week_(week) {}
  const std::string& student_id() const noexcept { return student_id_; }
  int week() const noexcept { return week_; }

private:
  std::string student_id_;
  int week_;
};

/// Fills semester_week from the calendar map, removes holiday-week reports and
/// sorts by (student_id, semester_week). Equal keys keep input order.
std::vector<WeeklyReport> align_weeks(std::vector<WeeklyReport> raw, const AcademicCalendar& calendar);

/// One cell of a per-course grade history.
struct RawCell {
  enum class Kind { Graded, Empty, Absent, NoReport };
  Kind kind = Kind::Absent;
  LetterGrade grade = LetterGrade::F;

  static RawCell graded(LetterGrade g) { return {Kind::Graded, g}; }
  static RawCell empty() { return {Kind::Empty}; }
  static RawCell absent() { return {Kind::Absent}; }
  static RawCell no_report() { return {Kind::NoReport}; }
};

/// Classifies every week of one course's history. Empty grades resolve with
/// precedence PassFail (catalog) > Dropped (course absent from every later
/// report) > NotYetPosted. Dropped is absorbing.
std::vector<GradeStatus> resolve_grade_status(std::string_view course_code, const std::vector<RawCell>& history,
                                              const CourseCatalog& catalog);

struct StudentSemester {
  std::string student_id;
  AcademicCalendar calendar;
  std::vector<WeeklyReport> reports;  // semester weeks 1..final_week

  friend bool operator==(const StudentSemester&, const StudentSemester&) = default;
};

struct BuildOptions {
  bool keep_latest = false;
};

/// Builds one student's semester from aligned reports: drops reports past the
/// final week, fills gaps with missing-week reports and resolves grade
/// statuses. Throws DuplicateWeek unless options.keep_latest.
StudentSemester build_student_semester(const std::vector<WeeklyReport>& reports, const AcademicCalendar& calendar,
                                       const CourseCatalog& catalog, const BuildOptions& options = {},
                                       std::vector<IngestIssue>* issues = nullptr);

struct IngestResult {
  std::vector<StudentSemester> semesters;
  std::vector<IngestIssue> issues;

  bool has_errors() const;
};

/// parse -> align -> build over every student in a report file. Calendar and
/// duplicate errors become Error issues instead of exceptions.
IngestResult ingest(std::string_view content, const AcademicCalendar& calendar, const CourseCatalog& catalog,
                    const ReportFormat& format = {}, const BuildOptions& options = {});

// ---------------------------------------------------------------------------
// Cleaned corpus
// ---------------------------------------------------------------------------

/// One row per student-week: student_id, semester_week, missing, courses
/// (`CODE=STATUS;...`), three escaped journal columns.
void write_corpus(std::ostream& out, const std::vector<StudentSemester>& semesters);
std::vector<StudentSemester> read_corpus(std::string_view content, const AcademicCalendar& calendar);

void write_issues(std::ostream& out, const std::vector<IngestIssue>& issues);

}  // namespace csguide
