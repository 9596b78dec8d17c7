#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/ingestion.hpp"

namespace csguide {

class CycleDetected : public Error {
public:
  using Error::Error;
};

class InvalidRuleTable : public Error {
public:
  using Error::Error;
};

class LengthMismatch : public Error {
public:
  using Error::Error;
};

struct RuleRow {
  InterventionSet direct;
  std::vector<Trigger> inherits;
};

/// Trigger -> interventions table with "interventions of X" inheritance.
/// Closures are computed once at construction; the inheritance graph must be
/// acyclic and every trigger must have exactly one row.
class RuleTable {
public:
  explicit RuleTable(std::array<RuleRow, kTriggerCount> rows);

  static RuleTable parse_json(std::string_view content);
  static RuleTable load(const std::filesystem::path& path);

  const RuleRow& row(Trigger t) const { return rows_.at(t.index); }
  const InterventionSet& expand(Trigger t) const { return closure_.at(t.index); }

private:
  std::array<RuleRow, kTriggerCount> rows_;
  std::array<InterventionSet, kTriggerCount> closure_;
};

inline InterventionSet expand_rule(const RuleTable& table, Trigger trigger) { return table.expand(trigger); }

/// Guarded suppression/addition applied after expansion.
struct ConflictRule {
  std::string name;
  std::vector<Trigger> all_of;
  std::vector<Trigger> any_of;
  std::vector<Trigger> none_of;
  InterventionSet suppress;
  // When non-empty, an intervention is suppressed only if every fired trigger
  // contributing it is listed here.
  std::vector<Trigger> only_from;
  std::string suppress_reason;
  InterventionSet add;
  std::string add_reason;

  bool matches(const std::vector<Trigger>& fired) const;
};

struct ConflictOverlay {
  InterventionSet deescalation_contact{Intervention::C1_1};
  InterventionSet once_per_semester{Intervention::S2, Intervention::S3, Intervention::S4};
  std::vector<ConflictRule> conflicts;

  static ConflictOverlay parse_json(std::string_view content);
  static ConflictOverlay load(const std::filesystem::path& path);
};

struct Annotation {
  Intervention intervention;
  std::string reason;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct WeeklyDecision {
  std::string student_id;
  int semester_week = 0;
  std::vector<Trigger> fired_triggers;
  InterventionSet interventions;
  std::vector<Annotation> suppressions;
  std::vector<Annotation> additions;

  InterventionSet suppressed() const;
  InterventionSet added() const;

  friend bool operator==(const WeeklyDecision&, const WeeklyDecision&) = default;
};

struct RuleEngine {
  RuleTable table;
  ConflictOverlay overlay;

  /// Union of per-trigger expansions, before any adjustment.
  InterventionSet unadjusted(const QuantFeatures& quant, const QualFeatures& qual) const;

  /// One week of the rule fold. `report_missing` defaults to "some M1 flag is
  /// set"; pass it explicitly when the report itself is known.
  std::pair<WeeklyDecision, EscalationState> apply(const QuantFeatures& quant, const QualFeatures& qual,
                                                    const EscalationState& state, int week,
                                                    const AcademicCalendar& calendar,
                                                    std::optional<bool> report_missing = std::nullopt) const;

  /// Folds apply() over all weeks from the zero state.
  std::vector<WeeklyDecision> run_semester(const StudentSemester& semester, const std::vector<QuantFeatures>& quant,
                                           const std::vector<QualFeatures>& qual) const;
};

inline std::pair<WeeklyDecision, EscalationState> apply_rules(const RuleEngine& engine, const QuantFeatures& quant,
                                                              const QualFeatures& qual, const EscalationState& state,
                                                              int week, const AcademicCalendar& calendar) {
  return engine.apply(quant, qual, state, week, calendar);
}

/// One JSON object per line: student_id, week, fired, interventions,
/// suppressions [{code, reason}], additions [{code, reason}].
void write_decisions(std::ostream& out, const std::vector<WeeklyDecision>& decisions);
std::vector<WeeklyDecision> read_decisions(std::string_view content);

}  // namespace csguide
