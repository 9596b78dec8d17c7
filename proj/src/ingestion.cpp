#include "csguide/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "csguide/text.hpp"

namespace csguide {

namespace {

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const std::string t = text::trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    throw Error("invalid integer for " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> split_lines(std::string_view content) {
  std::vector<std::string> lines = text::split(content, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view content) {
  std::vector<std::pair<std::string, std::string>> out;
  int line_no = 0;
  for (const std::string& raw : split_lines(content)) {
    ++line_no;
    std::string line = text::strip_invisible(raw);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("line " + std::to_string(line_no) + ": expected 'key = value'");
    out.emplace_back(text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
  }
  return out;
}

AcademicCalendar parse_calendar(std::string_view content) {
  AcademicCalendar cal;
  std::string week_map;
  for (const auto& [key, value] : parse_key_values(content)) {
    if (key == "semester_id") {
      cal.semester_id = value;
    } else if (key == "weeks") {
      cal.weeks = parse_int(value, key);
    } else if (key == "drop_deadline_week") {
      cal.drop_deadline_week = parse_int(value, key);
    } else if (key == "late_drop_deadline_week") {
      cal.late_drop_deadline_week = parse_int(value, key);
    } else if (key == "final_week") {
      cal.final_week = parse_int(value, key);
    } else if (key == "holiday_weeks") {
      for (const auto& item : text::split(value, ','))
        if (!text::trim(item).empty()) cal.holiday_weeks.insert(parse_int(item, key));
    } else if (key == "week_map") {
      week_map = value;
    } else {
      throw InvalidCalendar("unknown calendar key '" + key + "'");
    }
  }
  if (week_map.empty()) {
    cal.week_offset_map = AcademicCalendar::default_week_map(cal.final_week, cal.holiday_weeks);
  } else {
    for (const auto& item : text::split(week_map, ',')) {
      const auto parts = text::split(item, ':');
      if (parts.size() != 2) throw InvalidCalendar("week_map entries must be 'report:semester'");
      if (!cal.week_offset_map.emplace(parse_int(parts[0], "week_map"), parse_int(parts[1], "week_map")).second)
        throw InvalidCalendar("week_map lists report week '" + parts[0] + "' twice");
    }
  }
  cal.validate();
  return cal;
}

AcademicCalendar load_calendar(const std::filesystem::path& path) { return parse_calendar(read_file(path)); }

std::string format_calendar(const AcademicCalendar& cal) {
  std::ostringstream out;
  out << "semester_id = " << cal.semester_id << '\n'
      << "weeks = " << cal.weeks << '\n'
      << "drop_deadline_week = " << cal.drop_deadline_week << '\n'
      << "late_drop_deadline_week = " << cal.late_drop_deadline_week << '\n'
      << "final_week = " << cal.final_week << '\n';
  std::vector<std::string> holidays;
  for (int h : cal.holiday_weeks) holidays.push_back(std::to_string(h));
  out << "holiday_weeks = " << text::join(holidays, ",") << '\n';
  std::vector<std::string> pairs;
  for (const auto& [r, s] : cal.week_offset_map) pairs.push_back(std::to_string(r) + ":" + std::to_string(s));
  out << "week_map = " << text::join(pairs, ",") << '\n';
  return out.str();
}

CourseCatalog::CourseCatalog(std::map<std::string, CatalogEntry> entries) : entries_(std::move(entries)) {}

CourseCatalog CourseCatalog::parse(std::string_view content) {
  std::map<std::string, CatalogEntry> entries;
  for (const auto& [key, value] : parse_key_values(content)) {
    const auto parts = text::split(value, '|');
    CatalogEntry e;
    e.category = parse_category(text::trim(parts.at(0)));
    if (parts.size() > 1) e.title = text::trim(parts[1]);
    if (parts.size() > 2) {
      const std::string flag = text::trim(parts[2]);
      if (flag != "pass_fail") throw Error("catalog entry '" + key + "': unknown option '" + flag + "'");
      e.pass_fail = true;
    }
    const std::string code = normalize_course_code(key);
    if (!entries.emplace(code, e).second) throw Error("catalog lists '" + code + "' twice");
  }
  if (entries.empty()) throw Error("course catalog is empty");
  return CourseCatalog(std::move(entries));
}

CourseCatalog CourseCatalog::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string CourseCatalog::format() const {
  std::ostringstream out;
  for (const auto& [code, e] : entries_) {
    out << code << " = " << to_string(e.category) << " | " << e.title;
    if (e.pass_fail) out << " | pass_fail";
    out << '\n';
  }
  return out.str();
}

CourseCategory CourseCatalog::categorize(std::string_view code) const {
  auto it = entries_.find(std::string(code));
  return it == entries_.end() ? CourseCategory::OtherElectives : it->second.category;
}

bool CourseCatalog::is_pass_fail(std::string_view code) const {
  auto it = entries_.find(std::string(code));
  return it != entries_.end() && it->second.pass_fail;
}

std::string normalize_course_code(std::string_view raw) {
  std::string out;
  for (char c : text::strip_invisible(raw)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

// ---------------------------------------------------------------------------

ParseOutput parse_reports(std::string_view content, const ReportFormat& format) {
  ParseOutput out;
  const auto lines = split_lines(content);
  if (lines.empty()) {
    out.issues.push_back({IngestIssue::Severity::Error, 0, "ParseError", "", 0, "missing header row"});
    return out;
  }

  const auto header = text::split(lines[0], format.delimiter);
  int col_student = -1, col_week = -1, col_cs = -1, col_noncs = -1, col_personal = -1;
  std::map<int, std::pair<int, int>> course_cols;  // N -> (course col, grade col)
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const std::string name = text::to_lower(text::trim(text::strip_invisible(header[i])));
    auto numbered = [&](std::string_view prefix) -> int {
      if (name.rfind(prefix, 0) != 0) return -1;
      try {
        return parse_int(name.substr(prefix.size()), "column");
      } catch (const Error&) {
        return -1;
      }
    };
    if (name == "student_id") col_student = i;
    else if (name == "report_week") col_week = i;
    else if (name == "journal_cs") col_cs = i;
    else if (name == "journal_noncs") col_noncs = i;
    else if (name == "journal_personal") col_personal = i;
    else if (int n = numbered("course_"); n > 0) course_cols[n].first = i + 1;
    else if (int n = numbered("grade_"); n > 0) course_cols[n].second = i + 1;
  }
  if (col_student < 0 || col_week < 0 || col_cs < 0 || col_noncs < 0 || col_personal < 0) {
    out.issues.push_back({IngestIssue::Severity::Error, 0, "ParseError", "", 0,
                          "header must name student_id, report_week, journal_cs, journal_noncs, journal_personal"});
    return out;
  }
  for (const auto& [n, cols] : course_cols) {
    if (cols.first == 0 || cols.second == 0) {
      out.issues.push_back({IngestIssue::Severity::Error, 0, "ParseError", "", 0,
                            "course_" + std::to_string(n) + " and grade_" + std::to_string(n) + " must both be present"});
      return out;
    }
  }

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const int row = static_cast<int>(li);
    if (text::trim(text::strip_invisible(lines[li])).empty()) continue;
    auto cells = text::split(lines[li], format.delimiter);
    auto cell = [&](int idx) -> std::string {
      return idx >= 0 && idx < static_cast<int>(cells.size()) ? text::strip_invisible(cells[idx]) : std::string();
    };
    auto fail = [&](const std::string& student, int week, std::string reason) {
      out.issues.push_back({IngestIssue::Severity::Error, row, "ParseError", student, week, std::move(reason)});
    };

    const std::string student = text::trim(cell(col_student));
    if (cells.size() > header.size()) {
      fail(student, 0, "row has " + std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
      continue;
    }
    if (student.empty()) {
      fail(student, 0, "empty student_id");
      continue;
    }
    WeeklyReport report;
    report.student_id = student;
    try {
      report.report_week = parse_int(cell(col_week), "report_week");
    } catch (const Error& e) {
      fail(student, 0, e.what());
      continue;
    }
    if (report.report_week < 1) {
      fail(student, report.report_week, "report_week must be >= 1");
      continue;
    }

    bool row_ok = true;
    for (const auto& [n, cols] : course_cols) {
      const std::string code = normalize_course_code(cell(cols.first - 1));
      const std::string grade = text::trim(cell(cols.second - 1));
      if (code.empty()) {
        if (!grade.empty()) {
          fail(student, report.report_week, "grade_" + std::to_string(n) + " given without a course code");
          row_ok = false;
          break;
        }
        continue;
      }
      GradeStatus status = GradeStatus::not_yet_posted();
      if (!grade.empty()) {
        auto g = parse_grade(grade);
        if (!g) {
          fail(student, report.report_week, "unrecognized grade '" + grade + "' for " + code);
          row_ok = false;
          break;
        }
        status = GradeStatus::reported(*g);
      }
      const bool duplicate = std::any_of(report.courses.begin(), report.courses.end(),
                                         [&](const CourseEntry& c) { return c.code == code; });
      if (duplicate) {
        fail(student, report.report_week, "course " + code + " listed twice");
        row_ok = false;
        break;
      }
      report.courses.push_back({code, status});
    }
    if (!row_ok) continue;

    report.journal_cs = text::trim(text::unescape_cell(cell(col_cs)));
    report.journal_noncs = text::trim(text::unescape_cell(cell(col_noncs)));
    report.journal_personal = text::trim(text::unescape_cell(cell(col_personal)));

    if (report.courses.empty() && report.journals_empty()) {
      report.missing = true;
      out.issues.push_back({IngestIssue::Severity::Warning, row, "EmptyRow", student, report.report_week,
                            "row has no courses and no journal; treated as a missing report"});
    } else if (report.courses.empty()) {
      out.issues.push_back({IngestIssue::Severity::Warning, row, "MismatchWarning", student, report.report_week,
                            "journal present but no course grades"});
    }
    out.reports.push_back(std::move(report));
  }
  return out;
}

ParseOutput parse_reports_file(const std::filesystem::path& path, const ReportFormat& format) {
  return parse_reports(read_file(path), format);
}

void write_reports(std::ostream& out, const std::vector<WeeklyReport>& reports, const ReportFormat& format) {
  std::size_t max_courses = 0;
  // A course first seen as dropped, or ungraded the week before, stays listed
  // once more so the empty cells resolve the same way on re-ingest.
  std::map<std::pair<std::string, std::string>, GradeStatusKind> previous;
  auto listed_courses = [&](const WeeklyReport& r) {
    std::vector<const CourseEntry*> cells;
    for (const auto& c : r.courses) {
      auto& prev = previous.try_emplace({r.student_id, c.code}, GradeStatusKind::ReportMissing).first->second;
      const bool keep = c.status.kind != GradeStatusKind::Dropped ? c.status.kind != GradeStatusKind::ReportMissing
                                                                   : prev == GradeStatusKind::NotYetPosted || prev == GradeStatusKind::ReportMissing;
      prev = c.status.kind;
      if (keep) cells.push_back(&c);
    }
    return cells;
  };
  for (const auto& r : reports)
    if (!r.missing) max_courses = std::max(max_courses, listed_courses(r).size());
  previous.clear();
  const char d = format.delimiter;
  out << "student_id" << d << "report_week";
  for (std::size_t i = 1; i <= max_courses; ++i) out << d << "course_" << i << d << "grade_" << i;
  out << d << "journal_cs" << d << "journal_noncs" << d << "journal_personal" << '\n';
  for (const auto& r : reports) {
    if (r.missing) continue;
    out << r.student_id << d << r.report_week;
    const auto cells = listed_courses(r);
    for (std::size_t i = 0; i < max_courses; ++i) {
      if (i < cells.size()) {
        const auto& c = *cells[i];
        out << d << c.code << d << (c.status.is_reported() ? std::string(to_string(c.status.grade)) : "");
      } else {
        out << d << d;
      }
    }
    out << d << text::escape_cell(r.journal_cs) << d << text::escape_cell(r.journal_noncs) << d
        << text::escape_cell(r.journal_personal) << '\n';
  }
}

// ---------------------------------------------------------------------------

std::vector<WeeklyReport> align_weeks(std::vector<WeeklyReport> raw, const AcademicCalendar& calendar) {
  std::vector<WeeklyReport> out;
  out.reserve(raw.size());
  for (auto& r : raw) {
    if (calendar.holiday_weeks.count(r.report_week)) continue;
    auto it = calendar.week_offset_map.find(r.report_week);
    if (it == calendar.week_offset_map.end()) throw UnmappedWeek(r.report_week);
    r.semester_week = it->second;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const WeeklyReport& a, const WeeklyReport& b) {
    return std::tie(a.student_id, a.semester_week) < std::tie(b.student_id, b.semester_week);
  });
  return out;
}

std::vector<GradeStatus> resolve_grade_status(std::string_view course_code, const std::vector<RawCell>& history,
                                              const CourseCatalog& catalog) {
  using Kind = RawCell::Kind;
  const std::size_t n = history.size();
  const bool pass_fail = catalog.is_pass_fail(course_code);

  auto listed = [&](std::size_t w) { return history[w].kind == Kind::Graded || history[w].kind == Kind::Empty; };
  // later_present[w]: some present report after w; later_listed[w]: course listed after w.
  std::vector<bool> later_present(n + 1, false), later_listed(n + 1, false);
  for (std::size_t w = n; w-- > 0;) {
    later_present[w] = later_present[w + 1] || (w + 1 < n && history[w + 1].kind != Kind::NoReport);
    later_listed[w] = later_listed[w + 1] || (w + 1 < n && listed(w + 1));
  }

  std::vector<GradeStatus> out(n);
  bool appeared = false, dropped = false;
  for (std::size_t w = 0; w < n; ++w) {
    const RawCell& cell = history[w];
    if (dropped) {
      out[w] = GradeStatus::dropped();
      continue;
    }
    switch (cell.kind) {
      case Kind::Graded:
        out[w] = GradeStatus::reported(cell.grade);
        break;
      case Kind::NoReport:
        out[w] = GradeStatus::report_missing();
        break;
      case Kind::Empty:
      case Kind::Absent: {
        const bool here = cell.kind == Kind::Empty;
        if (pass_fail) {
          out[w] = GradeStatus::pass_fail();
        } else if ((appeared || here) && !later_listed[w] && (cell.kind == Kind::Absent || later_present[w])) {
          out[w] = GradeStatus::dropped();
          dropped = true;
        } else {
          out[w] = GradeStatus::not_yet_posted();
        }
        break;
      }
    }
    if (listed(w)) appeared = true;
  }
  return out;
}

StudentSemester build_student_semester(const std::vector<WeeklyReport>& reports, const AcademicCalendar& calendar,
                                       const CourseCatalog& catalog, const BuildOptions& options,
                                       std::vector<IngestIssue>* issues) {
  auto note = [&](IngestIssue issue) {
    if (issues) issues->push_back(std::move(issue));
  };
  StudentSemester sem;
  sem.calendar = calendar;
  if (!reports.empty()) sem.student_id = reports.front().student_id;

  const int final_week = calendar.final_week;
  std::vector<std::optional<WeeklyReport>> slots(final_week);
  for (const auto& r : reports) {
    if (r.semester_week < 1 || r.semester_week > final_week) {
      note({IngestIssue::Severity::Warning, 0, "OutOfSemester", r.student_id, r.semester_week,
            "report falls outside semester weeks 1.." + std::to_string(final_week) + "; ignored"});
      continue;
    }
    auto& slot = slots[r.semester_week - 1];
    if (slot) {
      if (!options.keep_latest) throw DuplicateWeek(r.student_id, r.semester_week);
      note({IngestIssue::Severity::Warning, 0, "DuplicateWeek", r.student_id, r.semester_week,
            "two reports map to this week; kept the later submission"});
    }
    slot = r;
  }

  // Course order: first appearance, then listing order within that report.
  std::vector<std::string> course_order;
  for (const auto& slot : slots) {
    if (!slot || slot->missing) continue;
    for (const auto& c : slot->courses)
      if (std::find(course_order.begin(), course_order.end(), c.code) == course_order.end())
        course_order.push_back(c.code);
  }

  sem.reports.reserve(final_week);
  for (int w = 1; w <= final_week; ++w) {
    auto& slot = slots[w - 1];
    if (slot && !slot->missing) {
      WeeklyReport r = *slot;
      r.courses.clear();
      r.semester_week = w;
      sem.reports.push_back(std::move(r));
    } else {
      sem.reports.push_back(WeeklyReport::missing_week(sem.student_id, w));
      if (slot) sem.reports.back().report_week = slot->report_week;
    }
  }

  for (const auto& code : course_order) {
    std::vector<RawCell> history(final_week);
    std::size_t first = final_week;
    for (int w = 0; w < final_week; ++w) {
      const auto& slot = slots[w];
      if (!slot || slot->missing) {
        history[w] = RawCell::no_report();
        continue;
      }
      auto it = std::find_if(slot->courses.begin(), slot->courses.end(),
                             [&](const CourseEntry& c) { return c.code == code; });
      if (it == slot->courses.end()) {
        history[w] = RawCell::absent();
      } else {
        history[w] = it->status.is_reported() ? RawCell::graded(it->status.grade) : RawCell::empty();
        first = std::min<std::size_t>(first, w);
      }
    }
    const auto statuses = resolve_grade_status(code, history, catalog);
    for (std::size_t w = first; w < static_cast<std::size_t>(final_week); ++w) {
      if (sem.reports[w].missing) continue;
      sem.reports[w].courses.push_back({code, statuses[w]});
    }
  }
  return sem;
}

bool IngestResult::has_errors() const {
  return std::any_of(issues.begin(), issues.end(), [](const IngestIssue& i) { return i.is_error(); });
}

IngestResult ingest(std::string_view content, const AcademicCalendar& calendar, const CourseCatalog& catalog,
                    const ReportFormat& format, const BuildOptions& options) {
  IngestResult result;
  ParseOutput parsed = parse_reports(content, format);
  result.issues = std::move(parsed.issues);

  std::vector<WeeklyReport> mappable;
  for (auto& r : parsed.reports) {
    if (!calendar.holiday_weeks.count(r.report_week) && !calendar.week_offset_map.count(r.report_week)) {
      result.issues.push_back({IngestIssue::Severity::Error, 0, "UnmappedWeek", r.student_id, r.report_week,
                               UnmappedWeek(r.report_week).what()});
      continue;
    }
    mappable.push_back(std::move(r));
  }
  auto aligned = align_weeks(std::move(mappable), calendar);

  std::size_t begin = 0;
  while (begin < aligned.size()) {
    std::size_t end = begin;
    while (end < aligned.size() && aligned[end].student_id == aligned[begin].student_id) ++end;
    std::vector<WeeklyReport> group(aligned.begin() + begin, aligned.begin() + end);
    try {
      result.semesters.push_back(build_student_semester(group, calendar, catalog, options, &result.issues));
    } catch (const DuplicateWeek& e) {
      result.issues.push_back({IngestIssue::Severity::Error, 0, "DuplicateWeek", e.student_id(), e.week(), e.what()});
    }
    begin = end;
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kCorpusHeader =
    "student_id\tsemester_week\tmissing\tcourses\tjournal_cs\tjournal_noncs\tjournal_personal";
}

void write_corpus(std::ostream& out, const std::vector<StudentSemester>& semesters) {
  out << kCorpusHeader << '\n';
  for (const auto& sem : semesters) {
    for (const auto& r : sem.reports) {
      std::vector<std::string> courses;
      for (const auto& c : r.courses) courses.push_back(c.code + "=" + encode_status(c.status));
      out << sem.student_id << '\t' << r.semester_week << '\t' << (r.missing ? 1 : 0) << '\t'
          << text::join(courses, ";") << '\t' << text::escape_cell(r.journal_cs) << '\t'
          << text::escape_cell(r.journal_noncs) << '\t' << text::escape_cell(r.journal_personal) << '\n';
    }
  }
}

std::vector<StudentSemester> read_corpus(std::string_view content, const AcademicCalendar& calendar) {
  std::vector<StudentSemester> out;
  const auto lines = split_lines(content);
  if (lines.empty() || lines[0] != kCorpusHeader) throw Error("corpus: missing or unexpected header line");
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = text::split(lines[li], '\t');
    if (cells.size() != 7) throw Error("corpus row " + std::to_string(li) + ": expected 7 cells");
    WeeklyReport r;
    r.student_id = cells[0];
    r.semester_week = r.report_week = parse_int(cells[1], "semester_week");
    r.missing = cells[2] == "1";
    if (!cells[3].empty()) {
      for (const auto& item : text::split(cells[3], ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error("corpus row " + std::to_string(li) + ": bad course cell");
        r.courses.push_back({item.substr(0, eq), decode_status(item.substr(eq + 1))});
      }
    }
    r.journal_cs = text::unescape_cell(cells[4]);
    r.journal_noncs = text::unescape_cell(cells[5]);
    r.journal_personal = text::unescape_cell(cells[6]);
    if (out.empty() || out.back().student_id != r.student_id) {
      out.push_back({r.student_id, calendar, {}});
    }
    out.back().reports.push_back(std::move(r));
  }
  for (const auto& sem : out) {
    if (static_cast<int>(sem.reports.size()) != calendar.final_week)
      throw Error("corpus: student '" + sem.student_id + "' does not cover weeks 1.." +
                  std::to_string(calendar.final_week));
    for (int w = 0; w < calendar.final_week; ++w)
      if (sem.reports[w].semester_week != w + 1)
        throw Error("corpus: student '" + sem.student_id + "' weeks out of order");
  }
  return out;
}

void write_issues(std::ostream& out, const std::vector<IngestIssue>& issues) {
  out << "severity\trow\tkind\tstudent_id\tweek\treason\n";
  for (const auto& i : issues) {
    out << (i.is_error() ? "error" : "warning") << '\t' << i.row << '\t' << i.kind << '\t' << i.student_id << '\t'
        << i.week << '\t' << text::escape_cell(i.reason) << '\n';
  }
}

}  // namespace csguide
