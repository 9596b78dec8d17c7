#include "csguide/quant_features.hpp"

#include <map>
#include <ostream>

#include "csguide/text.hpp"

namespace csguide {

namespace {

bool graded_course(const CourseEntry& c) {
  return c.status.kind != GradeStatusKind::Dropped && c.status.kind != GradeStatusKind::PassFail;
}

bool any_reported_below(const WeeklyReport& r, LetterGrade threshold) {
  for (const auto& c : r.courses)
    if (c.status.is_reported() && grade_below(c.status.grade, threshold)) return true;
  return false;
}

bool any_not_yet_posted(const WeeklyReport& r) {
  for (const auto& c : r.courses)
    if (c.status.kind == GradeStatusKind::NotYetPosted) return true;
  return false;
}

struct FinalGrade {
  LetterGrade grade;
  CourseCategory category;
};

// Last reported grade of every course still graded at the end of the semester.
std::vector<FinalGrade> final_grades(const StudentSemester& sem, const CourseCatalog& catalog) {
  std::map<std::string, std::optional<LetterGrade>> last_grade;
  std::map<std::string, bool> excluded;
  for (const auto& r : sem.reports) {
    if (r.missing) continue;
    for (const auto& c : r.courses) {
      if (c.status.is_reported()) last_grade[c.code] = c.status.grade;
      excluded[c.code] = !graded_course(c);
      last_grade.try_emplace(c.code);
    }
  }
  std::vector<FinalGrade> out;
  for (const auto& [code, grade] : last_grade)
    if (grade && !excluded[code]) out.push_back({*grade, catalog.categorize(code)});
  return out;
}

}  // namespace

std::vector<int> missing_streaks(const StudentSemester& semester) {
  std::vector<int> out(semester.reports.size(), 0);
  int run = 0;
  for (std::size_t i = 0; i < semester.reports.size(); ++i) {
    run = semester.reports[i].missing ? run + 1 : 0;
    out[i] = run;
  }
  return out;
}

std::vector<QuantFeatures> extract_quant(const StudentSemester& semester, const CourseCatalog& catalog) {
  const auto& cal = semester.calendar;
  const auto streaks = missing_streaks(semester);
  const auto finals = final_grades(semester, catalog);

  std::vector<QuantFeatures> out(semester.reports.size());
  for (std::size_t i = 0; i < semester.reports.size(); ++i) {
    const WeeklyReport& r = semester.reports[i];
    const int w = static_cast<int>(i) + 1;
    QuantFeatures& f = out[i];

    if (!r.missing && w == cal.drop_deadline_week - 1) {
      f.set(QuantFlag::G1_1, any_reported_below(r, LetterGrade::BMinus));
      f.set(QuantFlag::G1_2, any_not_yet_posted(r));
    }
    if (!r.missing && w == cal.late_drop_deadline_week - 1) {
      f.set(QuantFlag::G2_1, any_reported_below(r, LetterGrade::BMinus));
      f.set(QuantFlag::G2_2, any_not_yet_posted(r));
    }
    if (w == cal.final_week) {
      for (const auto& fg : finals) {
        if (grade_below(fg.grade, LetterGrade::BMinus)) f.set(QuantFlag::G3_1);
        if (grade_below(fg.grade, LetterGrade::CMinus)) f.set(QuantFlag::G3_2);
        if (grade_below(fg.grade, LetterGrade::CMinus) && fg.category == CourseCategory::CSTrackSTEM)
          f.set(QuantFlag::G3_3);
      }
    }

    const int run = streaks[i];
    if (run == 1) f.set(QuantFlag::M1_1);
    if (run == 2 && w <= cal.late_drop_deadline_week) f.set(QuantFlag::M1_2);
    if (run == 3) f.set(QuantFlag::M1_3);
    if (run >= 4) f.set(QuantFlag::M1_4);
    if (r.missing && w == cal.drop_deadline_week - 1) f.set(QuantFlag::M2_1);
    if (r.missing && w == cal.late_drop_deadline_week - 1) f.set(QuantFlag::M2_2);
  }
  return out;
}

template <typename Enum>
void write_feature_matrix(std::ostream& out, const std::vector<std::string>& student_ids,
                          const std::vector<std::vector<FlagSet<Enum>>>& rows) {
  out << "student_id\tweek";
  for (auto code : FlagTraits<Enum>::codes) out << '\t' << code;
  out << '\n';
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t w = 0; w < rows[s].size(); ++w) {
      out << student_ids[s] << '\t' << (w + 1);
      for (std::size_t k = 0; k < FlagSet<Enum>::size; ++k) out << '\t' << (rows[s][w].test_index(k) ? '1' : '0');
      out << '\n';
    }
  }
}

template <typename Enum>
FeatureMatrix<Enum> read_feature_matrix(std::string_view content) {
  FeatureMatrix<Enum> m;
  auto lines = text::split(content, '\n');
  if (lines.empty()) throw Error("feature matrix: empty file");
  const auto header = text::split(lines[0], '\t');
  if (header.size() != FlagSet<Enum>::size + 2) throw Error("feature matrix: unexpected column count");
  for (std::size_t k = 0; k < FlagSet<Enum>::size; ++k)
    if (header[k + 2] != FlagTraits<Enum>::codes[k])
      throw Error("feature matrix: column " + std::to_string(k + 2) + " should be " +
                  std::string(FlagTraits<Enum>::codes[k]));
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = text::split(lines[li], '\t');
    if (cells.size() != header.size()) throw Error("feature matrix: row " + std::to_string(li) + " malformed");
    const int week = std::stoi(cells[1]);
    if (m.student_ids.empty() || m.student_ids.back() != cells[0]) {
      m.student_ids.push_back(cells[0]);
      m.rows.emplace_back();
    }
    if (week != static_cast<int>(m.rows.back().size()) + 1)
      throw Error("feature matrix: student '" + cells[0] + "' weeks out of order");
    FlagSet<Enum> f;
    for (std::size_t k = 0; k < FlagSet<Enum>::size; ++k) {
      if (cells[k + 2] != "0" && cells[k + 2] != "1") throw Error("feature matrix: non-binary cell");
      f.set_index(k, cells[k + 2] == "1");
    }
    m.rows.back().push_back(f);
  }
  return m;
}

template void write_feature_matrix<QuantFlag>(std::ostream&, const std::vector<std::string>&,
                                              const std::vector<std::vector<QuantFeatures>>&);
template void write_feature_matrix<QualFlag>(std::ostream&, const std::vector<std::string>&,
                                             const std::vector<std::vector<QualFeatures>>&);
template FeatureMatrix<QuantFlag> read_feature_matrix<QuantFlag>(std::string_view);
template FeatureMatrix<QualFlag> read_feature_matrix<QualFlag>(std::string_view);

}  // namespace csguide
