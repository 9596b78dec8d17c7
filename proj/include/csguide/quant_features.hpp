#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/ingestion.hpp"

namespace csguide {

/// Per-week Table-of-triggers evaluation over one student's semester. Entry w
/// holds the flags of semester week w + 1.
///
/// Grade triggers look at a single anchor week: the week before the drop
/// deadline (G1.*), the week before the late drop deadline (G2.*) and the
/// final week (G3.*, using the last reported grade of each course that is
/// neither dropped nor pass/fail). Missing-report triggers use the length of
/// the missing streak ending at the week.
std::vector<QuantFeatures> extract_quant(const StudentSemester& semester, const CourseCatalog& catalog);

/// Length of the consecutive missing-report run ending at each week.
std::vector<int> missing_streaks(const StudentSemester& semester);

/// Feature matrix: header `student_id, week, <codes...>` then 0/1 rows.
template <typename Enum>
void write_feature_matrix(std::ostream& out, const std::vector<std::string>& student_ids,
                          const std::vector<std::vector<FlagSet<Enum>>>& rows);

template <typename Enum>
struct FeatureMatrix {
  std::vector<std::string> student_ids;
  std::vector<std::vector<FlagSet<Enum>>> rows;  // per student, per week
};

template <typename Enum>
FeatureMatrix<Enum> read_feature_matrix(std::string_view content);

}  // namespace csguide
