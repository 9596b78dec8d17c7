#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csguide {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UnknownCode : public Error {
public:
  explicit UnknownCode(std::string_view code)
      : Error("unknown code: '" + std::string(code) + "'"), code_(code) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

// ---------------------------------------------------------------------------
// Grades
// ---------------------------------------------------------------------------

/// Letter grades on the 12-step scale. Enumerator order is the grade order,
/// so the built-in comparison operators compare grades.
enum class LetterGrade : std::uint8_t {
  F, DMinus, D, DPlus, CMinus, C, CPlus, BMinus, B, BPlus, AMinus, A
};

inline constexpr std::array<LetterGrade, 12> kAllGrades = {
    LetterGrade::A,      LetterGrade::AMinus, LetterGrade::BPlus, LetterGrade::B,
    LetterGrade::BMinus, LetterGrade::CPlus,  LetterGrade::C,     LetterGrade::CMinus,
    LetterGrade::DPlus,  LetterGrade::D,      LetterGrade::DMinus, LetterGrade::F};

/// True iff `g` is strictly lower than `threshold`.
constexpr bool grade_below(LetterGrade g, LetterGrade threshold) noexcept {
  return g < threshold;
}

std::string_view to_string(LetterGrade g) noexcept;
std::optional<LetterGrade> parse_grade(std::string_view text) noexcept;

enum class GradeStatusKind : std::uint8_t { Reported, NotYetPosted, Dropped, PassFail, ReportMissing };

struct GradeStatus {
  GradeStatusKind kind = GradeStatusKind::NotYetPosted;
  LetterGrade grade = LetterGrade::F;  // meaningful only when kind == Reported

  static constexpr GradeStatus reported(LetterGrade g) noexcept { return {GradeStatusKind::Reported, g}; }
  static constexpr GradeStatus not_yet_posted() noexcept { return {GradeStatusKind::NotYetPosted}; }
  static constexpr GradeStatus dropped() noexcept { return {GradeStatusKind::Dropped}; }
  static constexpr GradeStatus pass_fail() noexcept { return {GradeStatusKind::PassFail}; }
  static constexpr GradeStatus report_missing() noexcept { return {GradeStatusKind::ReportMissing}; }

  constexpr bool is_reported() const noexcept { return kind == GradeStatusKind::Reported; }

  friend constexpr bool operator==(const GradeStatus& a, const GradeStatus& b) noexcept {
    return a.kind == b.kind && (a.kind != GradeStatusKind::Reported || a.grade == b.grade);
  }
};

/// Corpus token: letter grade, "NYP", "DROP", "PF" or "MISSING".
std::string encode_status(const GradeStatus& s);
GradeStatus decode_status(std::string_view token);

enum class CourseCategory : std::uint8_t { CSTrackCore, CSTrackSTEM, OtherElectives };

std::string_view to_string(CourseCategory c) noexcept;
CourseCategory parse_category(std::string_view text);

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

struct AcademicCalendar {
  std::string semester_id;
  int weeks = 15;
  int drop_deadline_week = 4;
  int late_drop_deadline_week = 8;
  int final_week = 15;
  std::set<int> holiday_weeks;            // report-week indices
  std::map<int, int> week_offset_map;     // report week -> semester week

  /// Throws InvalidCalendar if anchor ordering or map monotonicity fails.
  void validate() const;

  /// Identity map over report weeks, skipping holidays.
  static std::map<int, int> default_week_map(int final_week, const std::set<int>& holidays);

  friend bool operator==(const AcademicCalendar&, const AcademicCalendar&) = default;
};

class InvalidCalendar : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Weekly reports
// ---------------------------------------------------------------------------

struct CourseEntry {
  std::string code;
  GradeStatus status;

  friend bool operator==(const CourseEntry&, const CourseEntry&) = default;
};

struct WeeklyReport {
  std::string student_id;
  int report_week = 0;
  int semester_week = 0;
  std::vector<CourseEntry> courses;
  std::string journal_cs;
  std::string journal_noncs;
  std::string journal_personal;
  bool missing = false;

  bool journals_empty() const noexcept {
    return journal_cs.empty() && journal_noncs.empty() && journal_personal.empty();
  }

  static WeeklyReport missing_week(std::string student_id, int semester_week) {
    WeeklyReport r;
    r.student_id = std::move(student_id);
    r.report_week = semester_week;
    r.semester_week = semester_week;
    r.missing = true;
    return r;
  }

  friend bool operator==(const WeeklyReport&, const WeeklyReport&) = default;
};

// ---------------------------------------------------------------------------
// Flag vectors
// ---------------------------------------------------------------------------

enum class QuantFlag : std::uint8_t {
  G1_1, G1_2, G2_1, G2_2, G3_1, G3_2, G3_3, M1_1, M1_2, M1_3, M1_4, M2_1, M2_2
};

enum class QualFlag : std::uint8_t {
  A1, A2, A3, A4, H1_1, H1_2, H2, P1, P2_1, P2_2, P3, P4, P5, O
};

enum class Intervention : std::uint8_t {
  C1_1, C1_2, C1_3, C2, C3, C4,
  B1_1, B1_2, B2, B3, B4, B5,
  S1, S2, S3, S4, S5,
  R1, R2, R3, R4, R5, R6
};

template <typename Enum>
struct FlagTraits;

template <>
struct FlagTraits<QuantFlag> {
  static constexpr std::size_t size = 13;
  static constexpr std::array<std::string_view, size> codes = {
      "G1.1", "G1.2", "G2.1", "G2.2", "G3.1", "G3.2", "G3.3",
      "M1.1", "M1.2", "M1.3", "M1.4", "M2.1", "M2.2"};
};

template <>
struct FlagTraits<QualFlag> {
  static constexpr std::size_t size = 14;
  static constexpr std::array<std::string_view, size> codes = {
      "A1", "A2", "A3", "A4", "H1.1", "H1.2", "H2",
      "P1", "P2.1", "P2.2", "P3", "P4", "P5", "O"};
};

template <>
struct FlagTraits<Intervention> {
  static constexpr std::size_t size = 23;
  static constexpr std::array<std::string_view, size> codes = {
      "C1.1", "C1.2", "C1.3", "C2", "C3", "C4",
      "B1.1", "B1.2", "B2", "B3", "B4", "B5",
      "S1", "S2", "S3", "S4", "S5",
      "R1", "R2", "R3", "R4", "R5", "R6"};
};

template <typename Enum>
constexpr std::string_view code_of(Enum e) noexcept {
  return FlagTraits<Enum>::codes[static_cast<std::size_t>(e)];
}

/// Canonical code lookup; case-sensitive. Throws UnknownCode.
template <typename Enum>
Enum parse_code(std::string_view code) {
  const auto& codes = FlagTraits<Enum>::codes;
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes[i] == code) return static_cast<Enum>(i);
  throw UnknownCode(code);
}

template <typename Enum>
std::optional<Enum> try_parse_code(std::string_view code) noexcept {
  const auto& codes = FlagTraits<Enum>::codes;
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes[i] == code) return static_cast<Enum>(i);
  return std::nullopt;
}

inline Intervention intervention_parse(std::string_view code) { return parse_code<Intervention>(code); }

/// Fixed-width set of boolean flags indexed by an enumeration. Iteration and
/// serialization follow the canonical enumeration order.
template <typename Enum>
class FlagSet {
public:
  static constexpr std::size_t size = FlagTraits<Enum>::size;

  constexpr FlagSet() = default;
  FlagSet(std::initializer_list<Enum> flags) {
    for (Enum f : flags) set(f);
  }

  bool test(Enum f) const { return bits_.test(static_cast<std::size_t>(f)); }
  bool operator[](Enum f) const { return test(f); }
  bool test_index(std::size_t i) const { return bits_.test(i); }

  FlagSet& set(Enum f, bool value = true) {
    bits_.set(static_cast<std::size_t>(f), value);
    return *this;
  }
  FlagSet& reset(Enum f) { return set(f, false); }
  void set_index(std::size_t i, bool value = true) { bits_.set(i, value); }

  bool any() const noexcept { return bits_.any(); }
  bool none() const noexcept { return bits_.none(); }
  std::size_t count() const noexcept { return bits_.count(); }

  FlagSet& operator|=(const FlagSet& o) {
    bits_ |= o.bits_;
    return *this;
  }
  FlagSet& operator&=(const FlagSet& o) {
    bits_ &= o.bits_;
    return *this;
  }
  friend FlagSet operator|(FlagSet a, const FlagSet& b) { return a |= b; }
  friend FlagSet operator&(FlagSet a, const FlagSet& b) { return a &= b; }
  /// Set difference.
  friend FlagSet operator-(FlagSet a, const FlagSet& b) {
    a.bits_ &= ~b.bits_;
    return a;
  }

  bool contains(const FlagSet& o) const { return (o.bits_ & ~bits_).none(); }

  std::vector<Enum> members() const {
    std::vector<Enum> out;
    for (std::size_t i = 0; i < size; ++i)
      if (bits_.test(i)) out.push_back(static_cast<Enum>(i));
    return out;
  }

  std::vector<std::string> codes() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size; ++i)
      if (bits_.test(i)) out.emplace_back(FlagTraits<Enum>::codes[i]);
    return out;
  }

  /// Comma-separated true flags in canonical order; empty string for none.
  std::string encode() const {
    std::string out;
    for (std::size_t i = 0; i < size; ++i) {
      if (!bits_.test(i)) continue;
      if (!out.empty()) out += ',';
      out += FlagTraits<Enum>::codes[i];
    }
    return out;
  }

  static FlagSet decode(std::string_view text) {
    FlagSet out;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find(',', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view item = text.substr(start, end - start);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      if (!item.empty()) out.set(parse_code<Enum>(item));
      start = end + 1;
    }
    return out;
  }

  std::uint64_t to_ulong() const { return bits_.to_ullong(); }

  friend bool operator==(const FlagSet&, const FlagSet&) = default;

private:
  std::bitset<size> bits_;
};

using QuantFeatures = FlagSet<QuantFlag>;
using QualFeatures = FlagSet<QualFlag>;
using InterventionSet = FlagSet<Intervention>;

inline constexpr std::size_t kQuantCount = QuantFeatures::size;
inline constexpr std::size_t kQualCount = QualFeatures::size;
inline constexpr std::size_t kInterventionCount = InterventionSet::size;
inline constexpr std::size_t kTriggerCount = kQuantCount + kQualCount;

/// A trigger is any quantitative or qualitative feature; index 0..12 are
/// quantitative and 13..26 qualitative.
struct Trigger {
  std::size_t index = 0;

  static Trigger of(QuantFlag f) { return {static_cast<std::size_t>(f)}; }
  static Trigger of(QualFlag f) { return {kQuantCount + static_cast<std::size_t>(f)}; }

  std::string_view code() const noexcept {
    return index < kQuantCount ? FlagTraits<QuantFlag>::codes[index]
                               : FlagTraits<QualFlag>::codes[index - kQuantCount];
  }

  static Trigger parse(std::string_view code);

  friend auto operator<=>(const Trigger&, const Trigger&) = default;
};

/// All fired triggers of a (quant, qual) pair, quantitative first.
std::vector<Trigger> fired_triggers(const QuantFeatures& quant, const QualFeatures& qual);

// ---------------------------------------------------------------------------
// Escalation memory
// ---------------------------------------------------------------------------

struct EscalationState {
  int consecutive_misses = 0;
  InterventionSet workshops_attended;  // subset of {S2, S3, S4}
  bool escalation_halted = false;
  bool past_late_drop = false;

  friend bool operator==(const EscalationState&, const EscalationState&) = default;
};

}  // namespace csguide
