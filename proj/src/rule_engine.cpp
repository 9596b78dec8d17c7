#include "csguide/rule_engine.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "csguide/text.hpp"

namespace csguide {

using nlohmann::json;

namespace {

InterventionSet parse_interventions(const json& arr) {
  InterventionSet out;
  for (const auto& code : arr) out.set(parse_code<Intervention>(code.get<std::string>()));
  return out;
}

std::vector<Trigger> parse_triggers(const json& arr) {
  std::vector<Trigger> out;
  for (const auto& code : arr) out.push_back(Trigger::parse(code.get<std::string>()));
  return out;
}

bool is_missing_tier(Trigger t) {
  return t.index >= static_cast<std::size_t>(QuantFlag::M1_1) && t.index <= static_cast<std::size_t>(QuantFlag::M1_4);
}

bool contains(const std::vector<Trigger>& v, Trigger t) { return std::find(v.begin(), v.end(), t) != v.end(); }

json annotations_to_json(const std::vector<Annotation>& items) {
  json arr = json::array();
  for (const auto& a : items) arr.push_back({{"code", code_of(a.intervention)}, {"reason", a.reason}});
  return arr;
}

std::vector<Annotation> annotations_from_json(const json& arr) {
  std::vector<Annotation> out;
  for (const auto& a : arr)
    out.push_back({parse_code<Intervention>(a.at("code").get<std::string>()), a.at("reason").get<std::string>()});
  return out;
}

}  // namespace

RuleTable::RuleTable(std::array<RuleRow, kTriggerCount> rows) : rows_(std::move(rows)) {
  enum class Mark { Unvisited, Active, Done };
  std::array<Mark, kTriggerCount> marks{};
  auto visit = [&](auto&& self, std::size_t i) -> void {
    if (marks[i] == Mark::Done) return;
    if (marks[i] == Mark::Active)
      throw CycleDetected("rule table inheritance cycle through " + std::string(Trigger{i}.code()));
    marks[i] = Mark::Active;
    InterventionSet closure = rows_[i].direct;
    for (Trigger parent : rows_[i].inherits) {
      self(self, parent.index);
      closure |= closure_[parent.index];
    }
    closure_[i] = closure;
    marks[i] = Mark::Done;
  };
  for (std::size_t i = 0; i < kTriggerCount; ++i) visit(visit, i);
}

RuleTable RuleTable::parse_json(std::string_view content) {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::exception& e) {
    throw InvalidRuleTable(std::string("rule table: ") + e.what());
  }
  std::array<RuleRow, kTriggerCount> rows;
  std::array<bool, kTriggerCount> seen{};
  try {
    for (const auto& row : doc.at("rows")) {
      const Trigger t = Trigger::parse(row.at("trigger").get<std::string>());
      if (seen[t.index]) throw InvalidRuleTable("rule table lists " + std::string(t.code()) + " twice");
      seen[t.index] = true;
      rows[t.index].direct = parse_interventions(row.at("direct"));
      rows[t.index].inherits = parse_triggers(row.value("inherits", json::array()));
    }
  } catch (const json::exception& e) {
    throw InvalidRuleTable(std::string("rule table: ") + e.what());
  } catch (const UnknownCode& e) {
    throw InvalidRuleTable(std::string("rule table: ") + e.what());
  }
  for (std::size_t i = 0; i < kTriggerCount; ++i)
    if (!seen[i]) throw InvalidRuleTable("rule table has no row for " + std::string(Trigger{i}.code()));
  return RuleTable(std::move(rows));
}

RuleTable RuleTable::load(const std::filesystem::path& path) { return parse_json(read_file(path)); }

bool ConflictRule::matches(const std::vector<Trigger>& fired) const {
  for (Trigger t : all_of)
    if (!contains(fired, t)) return false;
  for (Trigger t : none_of)
    if (contains(fired, t)) return false;
  if (!any_of.empty() && std::none_of(any_of.begin(), any_of.end(), [&](Trigger t) { return contains(fired, t); }))
    return false;
  return true;
}

ConflictOverlay ConflictOverlay::parse_json(std::string_view content) {
  ConflictOverlay overlay;
  try {
    const json doc = json::parse(content);
    if (doc.contains("deescalation_contact"))
      overlay.deescalation_contact = parse_interventions(doc["deescalation_contact"]);
    if (doc.contains("once_per_semester")) overlay.once_per_semester = parse_interventions(doc["once_per_semester"]);
    for (const auto& c : doc.value("conflicts", json::array())) {
      ConflictRule rule;
      rule.name = c.at("name").get<std::string>();
      rule.all_of = parse_triggers(c.value("all_of", json::array()));
      rule.any_of = parse_triggers(c.value("any_of", json::array()));
      rule.none_of = parse_triggers(c.value("none_of", json::array()));
      rule.only_from = parse_triggers(c.value("only_from", json::array()));
      rule.suppress = parse_interventions(c.value("suppress", json::array()));
      rule.suppress_reason = c.value("suppress_reason", rule.name);
      rule.add = parse_interventions(c.value("add", json::array()));
      rule.add_reason = c.value("add_reason", rule.name);
      if (rule.all_of.empty() && rule.any_of.empty())
        throw InvalidRuleTable("conflict '" + rule.name + "' has no positive guard");
      overlay.conflicts.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw InvalidRuleTable(std::string("conflict overlay: ") + e.what());
  } catch (const UnknownCode& e) {
    throw InvalidRuleTable(std::string("conflict overlay: ") + e.what());
  }
  return overlay;
}

ConflictOverlay ConflictOverlay::load(const std::filesystem::path& path) { return parse_json(read_file(path)); }

InterventionSet WeeklyDecision::suppressed() const {
  InterventionSet out;
  for (const auto& s : suppressions) out.set(s.intervention);
  return out;
}

InterventionSet WeeklyDecision::added() const {
  InterventionSet out;
  for (const auto& a : additions) out.set(a.intervention);
  return out;
}

InterventionSet RuleEngine::unadjusted(const QuantFeatures& quant, const QualFeatures& qual) const {
  InterventionSet out;
  for (Trigger t : fired_triggers(quant, qual)) out |= table.expand(t);
  return out;
}

std::pair<WeeklyDecision, EscalationState> RuleEngine::apply(const QuantFeatures& quant, const QualFeatures& qual,
                                                              const EscalationState& state, int week,
                                                              const AcademicCalendar& calendar,
                                                              std::optional<bool> report_missing) const {
  WeeklyDecision d;
  d.semester_week = week;
  d.fired_triggers = fired_triggers(quant, qual);
  const auto& fired = d.fired_triggers;

  auto suppress = [&](Intervention i, const std::string& reason) {
    if (!d.interventions.test(i)) return;
    d.interventions.reset(i);
    d.suppressions.push_back({i, reason});
  };

  const bool any_tier = quant[QuantFlag::M1_1] || quant[QuantFlag::M1_2] || quant[QuantFlag::M1_3] ||
                        quant[QuantFlag::M1_4];
  const bool missing = report_missing.value_or(any_tier);
  const bool past_late_drop = state.past_late_drop || week > calendar.late_drop_deadline_week;
  const bool halted = state.escalation_halted || quant[QuantFlag::M1_4] || past_late_drop;

  // Missing-report tiers contribute only the de-escalation contact once
  // escalation has stopped; every other trigger contributes its full closure.
  InterventionSet tier_contacts;
  for (Trigger t : fired) {
    if (is_missing_tier(t)) tier_contacts |= table.expand(t);
    else d.interventions |= table.expand(t);
  }
  if (halted && tier_contacts.any()) {
    const InterventionSet kept = d.interventions | overlay.deescalation_contact;
    d.interventions = d.interventions | tier_contacts;
    for (Intervention i : (tier_contacts - kept).members())
      suppress(i, "escalation halted; contact limited to weekly email");
    d.interventions |= overlay.deescalation_contact;
  } else {
    d.interventions |= tier_contacts;
  }

  for (Intervention i : (d.interventions & overlay.once_per_semester & state.workshops_attended).members())
    suppress(i, "workshop already offered this semester");

  for (const auto& rule : overlay.conflicts) {
    if (!rule.matches(fired)) continue;
    for (Intervention i : (d.interventions & rule.suppress).members()) {
      if (!rule.only_from.empty()) {
        const bool other_source = std::any_of(fired.begin(), fired.end(), [&](Trigger t) {
          return !contains(rule.only_from, t) && table.expand(t).test(i) &&
                 !(halted && is_missing_tier(t));
        });
        if (other_source) continue;
      }
      suppress(i, rule.suppress_reason);
    }
    for (Intervention i : (rule.add - d.interventions).members()) {
      d.interventions.set(i);
      d.additions.push_back({i, rule.add_reason});
    }
  }

  EscalationState next = state;
  if (report_missing.has_value()) {
    next.consecutive_misses = missing ? state.consecutive_misses + 1 : 0;
  } else if (quant[QuantFlag::M1_4]) {
    next.consecutive_misses = std::max(4, state.consecutive_misses + 1);
  } else {
    // Tier flags carry the run length; without them the report is present.
    next.consecutive_misses = quant[QuantFlag::M1_3] ? 3 : quant[QuantFlag::M1_2] ? 2 : quant[QuantFlag::M1_1] ? 1 : 0;
  }
  next.past_late_drop = past_late_drop;
  next.escalation_halted = past_late_drop || next.consecutive_misses >= 4;
  next.workshops_attended |= d.interventions & overlay.once_per_semester;
  return {std::move(d), next};
}

std::vector<WeeklyDecision> RuleEngine::run_semester(const StudentSemester& semester,
                                                     const std::vector<QuantFeatures>& quant,
                                                     const std::vector<QualFeatures>& qual) const {
  const std::size_t n = semester.reports.size();
  if (quant.size() != n || qual.size() != n)
    throw LengthMismatch("run_semester: " + std::to_string(n) + " reports, " + std::to_string(quant.size()) +
                         " quantitative rows, " + std::to_string(qual.size()) + " qualitative rows");
  std::vector<WeeklyDecision> out;
  out.reserve(n);
  EscalationState state;
  for (std::size_t i = 0; i < n; ++i) {
    auto [decision, next] = apply(quant[i], qual[i], state, static_cast<int>(i) + 1, semester.calendar,
                                  semester.reports[i].missing);
    decision.student_id = semester.student_id;
    out.push_back(std::move(decision));
    state = next;
  }
  return out;
}

void write_decisions(std::ostream& out, const std::vector<WeeklyDecision>& decisions) {
  for (const auto& d : decisions) {
    json fired = json::array();
    for (Trigger t : d.fired_triggers) fired.push_back(t.code());
    json rec = {{"student_id", d.student_id},
                {"week", d.semester_week},
                {"fired", fired},
                {"interventions", d.interventions.codes()},
                {"suppressions", annotations_to_json(d.suppressions)},
                {"additions", annotations_to_json(d.additions)}};
    out << rec.dump() << '\n';
  }
}

std::vector<WeeklyDecision> read_decisions(std::string_view content) {
  std::vector<WeeklyDecision> out;
  for (const auto& line : text::split(content, '\n')) {
    if (text::trim(line).empty()) continue;
    const json rec = json::parse(line);
    WeeklyDecision d;
    d.student_id = rec.at("student_id").get<std::string>();
    d.semester_week = rec.at("week").get<int>();
    d.fired_triggers = parse_triggers(rec.at("fired"));
    d.interventions = parse_interventions(rec.at("interventions"));
    d.suppressions = annotations_from_json(rec.at("suppressions"));
    d.additions = annotations_from_json(rec.at("additions"));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace csguide
