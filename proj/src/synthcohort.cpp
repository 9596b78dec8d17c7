#include "csguide/synthcohort.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "csguide/parallel.hpp"
#include "csguide/qual_features.hpp"
#include "csguide/quant_features.hpp"
#include "csguide/random.hpp"

namespace csguide {

using nlohmann::json;

std::string_view to_string(Archetype a) noexcept {
  switch (a) {
    case Archetype::Thriving: return "thriving";
    case Archetype::StrugglingAcademic: return "struggling_academic";
    case Archetype::Ill: return "ill";
    case Archetype::Overcommitted: return "overcommitted";
    case Archetype::Disengaged: return "disengaged";
    case Archetype::Transitioning: return "transitioning";
  }
  return "thriving";
}

Archetype parse_archetype(std::string_view text) {
  for (Archetype a : kAllArchetypes)
    if (to_string(a) == text) return a;
  throw InvalidConfig("unknown archetype '" + std::string(text) + "'");
}

PhraseBank PhraseBank::parse_json(std::string_view content) {
  PhraseBank bank;
  try {
    const json doc = json::parse(content);
    bank.courses = doc.at("courses").get<std::vector<std::string>>();
    bank.cs_courses = doc.at("cs_courses").get<std::vector<std::string>>();
    for (const auto& [code, list] : doc.at("positive").items())
      bank.positive[parse_code<QualFlag>(code)] = list.get<std::vector<std::string>>();
    bank.neutral = doc.at("neutral").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(std::string("phrase bank: ") + e.what());
  }
  if (bank.courses.empty() || bank.neutral.empty()) throw Error("phrase bank: courses and neutral must be non-empty");
  for (const auto& [flag, list] : bank.positive)
    if (list.empty()) throw Error("phrase bank: no sentences for " + std::string(code_of(flag)));
  return bank;
}

PhraseBank PhraseBank::load(const std::filesystem::path& path) { return parse_json(read_file(path)); }

void NoiseConfig::validate() const {
  for (double p : {late_posting_rate, typo_rate, skipped_journal_rate})
    if (!(p >= 0 && p <= 1)) throw InvalidConfig("noise probabilities must lie in [0, 1]");
  if (late_posting_weeks < 1) throw InvalidConfig("late_posting_weeks must be >= 1");
}

void CohortConfig::validate() const {
  if (student_count < 0) throw InvalidConfig("student_count must be >= 0");
  try {
    calendar.validate();
  } catch (const InvalidCalendar& e) {
    throw InvalidConfig(e.what());
  }
  if (calendar.final_week > calendar.weeks) throw InvalidConfig("final_week exceeds weeks");
  double sum = 0;
  for (const auto& [a, p] : archetype_mix) {
    if (!(p >= 0 && p <= 1)) throw InvalidConfig("archetype probabilities must lie in [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidConfig("archetype probabilities must sum to 1");
  noise.validate();
  auto count = [&](CourseCategory c) {
    return std::count_if(catalog.entries().begin(), catalog.entries().end(),
                         [c](const auto& kv) { return kv.second.category == c && !kv.second.pass_fail; });
  };
  if (count(CourseCategory::CSTrackCore) == 0 || count(CourseCategory::CSTrackSTEM) == 0 ||
      count(CourseCategory::OtherElectives) == 0)
    throw InvalidConfig("catalog needs graded core, STEM and elective courses");
}

std::map<Archetype, double> default_archetype_mix() {
  return {{Archetype::Thriving, 0.25},      {Archetype::StrugglingAcademic, 0.20}, {Archetype::Ill, 0.15},
          {Archetype::Overcommitted, 0.15}, {Archetype::Disengaged, 0.10},         {Archetype::Transitioning, 0.15}};
}

namespace {

constexpr int kGradeBMinus = static_cast<int>(LetterGrade::BMinus);
constexpr int kGradeB = static_cast<int>(LetterGrade::B);
constexpr int kGradeCMinus = static_cast<int>(LetterGrade::CMinus);
constexpr int kGradeA = static_cast<int>(LetterGrade::A);

struct CoursePlan {
  std::string code;
  int post_week = 1;
  int level = kGradeB;
  int drift_down = 15, drift_up = 15;  // percent per week
  int floor = 0;
  bool hard = false;
  int drop_after = 0;  // last week listed; 0 = never dropped
};

struct FlagRate {
  QualFlag flag;
  double p;
};

std::vector<FlagRate> weekly_rates(Archetype a, int week, const AcademicCalendar& cal) {
  using Q = QualFlag;
  switch (a) {
    case Archetype::Thriving: return {};
    case Archetype::StrugglingAcademic:
      return {{Q::A1, 0.20}, {Q::A2, 0.20}, {Q::A3, 0.10}, {Q::P1, 0.10}, {Q::O, 0.05}};
    case Archetype::Ill: return {{Q::H2, 0.05}, {Q::A2, 0.05}, {Q::P5, 0.03}};
    case Archetype::Overcommitted:
      return {{Q::P2_1, 0.25}, {Q::P2_2, 0.12}, {Q::P4, 0.12}, {Q::O, 0.10}, {Q::A1, 0.08}};
    case Archetype::Disengaged:
      return {{Q::P3, 0.12}, {Q::P4, 0.15}, {Q::P5, 0.10}, {Q::H2, 0.05}, {Q::A3, 0.05}};
    case Archetype::Transitioning: {
      const bool early = week <= cal.drop_deadline_week;
      return {{Q::A4, early ? 0.25 : 0.03}, {Q::P3, week <= cal.late_drop_deadline_week - 2 ? 0.25 : 0.08},
              {Q::P1, 0.15}, {Q::O, 0.10}};
    }
  }
  return {};
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

std::string fill_course(std::string sentence, const std::string& course) {
  const std::string marker = "{course}";
  for (auto pos = sentence.find(marker); pos != std::string::npos; pos = sentence.find(marker, pos + course.size()))
    sentence.replace(pos, marker.size(), course);
  return sentence;
}

class StudentGenerator {
public:
  StudentGenerator(const CohortConfig& config, const PhraseBank& bank, std::size_t index)
      : config_(config), cal_(config.calendar), bank_(bank), rng_(derive_seed(config.seed, index)) {
    const int width = std::max<int>(4, static_cast<int>(std::to_string(std::max(config.student_count, 1)).size()));
    std::string n = std::to_string(index + 1);
    id_ = config.id_prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n;
    for (const auto& [code, e] : config.catalog.entries()) {
      if (e.pass_fail) pass_fail_.push_back(code);
      else if (e.category == CourseCategory::CSTrackCore) core_.push_back(code);
      else if (e.category == CourseCategory::CSTrackSTEM) stem_.push_back(code);
      else elective_.push_back(code);
    }
  }

  LatentTrace trace;
  std::vector<WeeklyReport> raw;

  void run() {
    trace.student_id = id_;
    trace.archetype = draw_archetype();
    const Archetype a = trace.archetype;
    const int weeks = cal_.final_week;
    plan_courses(a);
    const std::vector<bool> missed = plan_misses(a, weeks);
    const std::vector<bool> ill = plan_illness(a, weeks);

    std::vector<QualFeatures> qual(static_cast<std::size_t>(weeks));
    for (int w = 1; w <= weeks; ++w) {
      auto& q = qual[static_cast<std::size_t>(w - 1)];
      for (const auto& r : weekly_rates(a, w, cal_))
        if (rng_.bernoulli(r.p)) q.set(r.flag);
      if (ill[static_cast<std::size_t>(w - 1)]) {
        q.set(QualFlag::H1_1);
        if (rng_.bernoulli(0.2)) q.set(QualFlag::A2);
      }
      if (missed[static_cast<std::size_t>(w - 1)]) q = QualFeatures{};
    }
    promote_illness(qual);

    std::map<int, int> report_week_of;
    for (const auto& [r, s] : cal_.week_offset_map) report_week_of.emplace(s, r);

    trace.weeks.resize(static_cast<std::size_t>(weeks));
    for (int w = 1; w <= weeks; ++w) {
      evolve_grades(w);
      LatentWeek& lw = trace.weeks[static_cast<std::size_t>(w - 1)];
      lw.qual = qual[static_cast<std::size_t>(w - 1)];
      lw.missed = missed[static_cast<std::size_t>(w - 1)];
      for (const auto& c : courses_)
        if (w >= c.post_week && (c.drop_after == 0 || w <= c.drop_after)) lw.grade_levels[c.code] = c.level;
      if (lw.missed) continue;

      WeeklyReport r;
      r.student_id = id_;
      auto it = report_week_of.find(w);
      if (it == report_week_of.end()) throw InvalidConfig("calendar maps no report week to semester week " + std::to_string(w));
      r.report_week = it->second;
      r.semester_week = w;
      for (const auto& c : courses_) {
        if (c.drop_after != 0 && w > c.drop_after) continue;
        r.courses.push_back({c.code, w >= c.post_week ? GradeStatus::reported(static_cast<LetterGrade>(c.level))
                                                      : GradeStatus::not_yet_posted()});
      }
      write_journals(r, lw.qual, a);
      raw.push_back(std::move(r));
    }
  }

private:
  Archetype draw_archetype() {
    const double u = rng_.uniform();
    double acc = 0;
    Archetype last = Archetype::Thriving;
    for (Archetype a : kAllArchetypes) {
      auto it = config_.archetype_mix.find(a);
      if (it == config_.archetype_mix.end() || it->second <= 0) continue;
      acc += it->second;
      last = a;
      if (u < acc) return a;
    }
    return last;
  }

  void plan_courses(Archetype a) {
    std::vector<std::string> chosen;
    auto take = [&](const std::vector<std::string>& pool) {
      std::vector<std::string> left;
      for (const auto& c : pool)
        if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) left.push_back(c);
      if (!left.empty()) chosen.push_back(pick(left, rng_));
    };
    take(core_);
    take(stem_);
    take(elective_);
    take(rng_.bernoulli(0.5) ? core_ : stem_);
    if (!pass_fail_.empty() && rng_.bernoulli(0.3)) take(pass_fail_);

    const int g1_anchor = std::max(1, cal_.drop_deadline_week - 1);
    int hard_left = a == Archetype::StrugglingAcademic ? 1 + static_cast<int>(rng_.below(2)) : 0;
    for (const auto& code : chosen) {
      CoursePlan c;
      c.code = code;
      const bool graded = !config_.catalog.is_pass_fail(code);
      if (a == Archetype::Thriving) {
        c.post_week = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(g1_anchor)));
        c.level = kGradeB + static_cast<int>(rng_.below(4));
        c.floor = kGradeB;
        c.drift_down = c.drift_up = 10;
      } else {
        c.post_week = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(g1_anchor + 1)));
        c.level = kGradeBMinus + static_cast<int>(rng_.below(5));
        c.floor = 0;
        if (graded && hard_left > 0) {
          --hard_left;
          c.hard = true;
          c.level = kGradeCMinus - 1 + static_cast<int>(rng_.below(4));
          c.drift_down = 30;
          c.drift_up = 10;
        } else if (rng_.bernoulli(0.12)) {
          c.level = kGradeCMinus + 1 + static_cast<int>(rng_.below(2));
        }
      }
      courses_.push_back(c);
    }
  }

  void evolve_grades(int week) {
    for (auto& c : courses_) {
      if (week <= c.post_week) continue;
      const auto u = static_cast<int>(rng_.below(100));
      if (u < c.drift_down) --c.level;
      else if (u < c.drift_down + c.drift_up) ++c.level;
      c.level = std::clamp(c.level, c.floor, kGradeA);
      if (c.hard && c.drop_after == 0 && week > cal_.drop_deadline_week && week < cal_.late_drop_deadline_week &&
          c.level < kGradeCMinus && rng_.bernoulli(0.25))
        c.drop_after = week;
    }
  }

  std::vector<bool> plan_misses(Archetype a, int weeks) {
    std::vector<bool> missed(static_cast<std::size_t>(weeks), false);
    if (a == Archetype::Thriving) return missed;
    const double background = a == Archetype::Disengaged ? 0.05 : 0.03;
    for (int w = 2; w <= weeks; ++w) missed[static_cast<std::size_t>(w - 1)] = rng_.bernoulli(background);
    if (a == Archetype::Disengaged) {
      const int streaks = 1 + static_cast<int>(rng_.below(2));
      for (int s = 0; s < streaks; ++s) {
        const int start = 2 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(std::max(1, weeks - 1))));
        const int length = 1 + static_cast<int>(rng_.below(5));
        for (int w = start; w < start + length && w <= weeks; ++w) missed[static_cast<std::size_t>(w - 1)] = true;
      }
    }
    return missed;
  }

  std::vector<bool> plan_illness(Archetype a, int weeks) {
    std::vector<bool> ill(static_cast<std::size_t>(weeks), false);
    if (a != Archetype::Ill) return ill;
    const int episodes = rng_.bernoulli(0.3) ? 2 : 1;
    for (int e = 0; e < episodes; ++e) {
      const int start = 2 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(std::max(1, weeks - 2))));
      const int length = 1 + static_cast<int>(rng_.below(3));
      for (int w = start; w < start + length && w <= weeks; ++w) ill[static_cast<std::size_t>(w - 1)] = true;
    }
    return ill;
  }

  void write_journals(WeeklyReport& r, const QualFeatures& q, Archetype a) {
    std::vector<std::string> cs, noncs, personal;
    auto is_cs = [&](const std::string& course) {
      return std::find(bank_.cs_courses.begin(), bank_.cs_courses.end(), course) != bank_.cs_courses.end();
    };
    for (QualFlag f : q.members()) {
      const QualFlag key = f == QualFlag::H1_2 ? QualFlag::H1_1 : f;
      auto it = bank_.positive.find(key);
      if (it == bank_.positive.end()) throw Error("phrase bank has no sentences for " + std::string(code_of(key)));
      const std::string& course = pick(bank_.courses, rng_);
      const std::string& raw = pick(it->second, rng_);
      std::string sentence = fill_course(raw, course);
      if (code_of(f).front() == 'A') {
        (raw.find("{course}") == std::string::npos || is_cs(course) ? cs : noncs).push_back(std::move(sentence));
      } else {
        personal.push_back(std::move(sentence));
      }
    }
    const int neutral = a == Archetype::Thriving ? 1 + static_cast<int>(rng_.below(2)) : rng_.bernoulli(0.6) ? 1 : 0;
    for (int k = 0; k < neutral; ++k) {
      auto& col = cs.empty() || rng_.bernoulli(0.5) ? cs : personal;
      col.insert(col.begin() + static_cast<std::ptrdiff_t>(rng_.below(col.size() + 1)), pick(bank_.neutral, rng_));
    }
    auto join = [](const std::vector<std::string>& v) {
      std::string out;
      for (const auto& s : v) out += (out.empty() ? "" : " ") + s;
      return out;
    };
    r.journal_cs = join(cs);
    r.journal_noncs = join(noncs);
    r.journal_personal = join(personal);
  }

  const CohortConfig& config_;
  const AcademicCalendar& cal_;
  const PhraseBank& bank_;
  Rng rng_;
  std::string id_;
  std::vector<std::string> core_, stem_, elective_, pass_fail_;
  std::vector<CoursePlan> courses_;
};

}  // namespace

SyntheticCohort generate_cohort(const CohortConfig& config, const PhraseBank& bank, const RuleEngine& engine,
                                unsigned workers) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.student_count);
  SyntheticCohort out;
  out.semesters.resize(n);
  out.true_qual.resize(n);
  out.traces.resize(n);
  std::vector<std::vector<GroundTruthRecord>> labels(n);

  parallel_for(n, workers, [&](std::size_t i) {
    StudentGenerator gen(config, bank, i);
    gen.run();
    StudentSemester semester = build_student_semester(gen.raw, config.calendar, config.catalog);
    semester.student_id = gen.trace.student_id;
    for (auto& r : semester.reports) r.student_id = semester.student_id;
    std::vector<QualFeatures> qual;
    for (const auto& w : gen.trace.weeks) qual.push_back(w.qual);
    const auto quant = extract_quant(semester, config.catalog);
    labels[i] = ground_truth_from(engine.run_semester(semester, quant, qual), "rule_engine");
    out.semesters[i] = std::move(semester);
    out.true_qual[i] = std::move(qual);
    out.traces[i] = std::move(gen.trace);
  });
  for (auto& l : labels) out.labels.insert(out.labels.end(), l.begin(), l.end());
  return out;
}

std::vector<WeeklyReport> to_raw_reports(const StudentSemester& semester) {
  std::vector<WeeklyReport> out;
  std::map<std::string, GradeStatusKind> previous;
  for (const auto& r : semester.reports) {
    if (r.missing) continue;
    WeeklyReport raw = r;
    raw.courses.clear();
    for (const auto& c : r.courses) {
      auto& prev = previous.try_emplace(c.code, GradeStatusKind::ReportMissing).first->second;
      const bool keep = c.status.kind != GradeStatusKind::Dropped ? c.status.kind != GradeStatusKind::ReportMissing
                                                                   : prev == GradeStatusKind::NotYetPosted || prev == GradeStatusKind::ReportMissing;
      prev = c.status.kind;
      if (!keep) continue;
      raw.courses.push_back({c.code, c.status.is_reported() ? c.status : GradeStatus::not_yet_posted()});
    }
    out.push_back(std::move(raw));
  }
  return out;
}

namespace {

std::string mutate_code(const std::string& code, const CourseCatalog& catalog) {
  std::string out = code;
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(out[i])) && std::isdigit(static_cast<unsigned char>(out[i + 1])) &&
        out[i] != out[i + 1]) {
      std::swap(out[i], out[i + 1]);
      break;
    }
  }
  while (out == code || catalog.entries().count(out)) out += 'X';
  return out;
}

}  // namespace

std::vector<StudentSemester> inject_noise(const std::vector<StudentSemester>& corpus, const NoiseConfig& noise,
                                          const CourseCatalog& catalog, std::uint64_t seed) {
  noise.validate();
  std::vector<StudentSemester> out;
  out.reserve(corpus.size());
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    StudentSemester sem = corpus[s];
    Rng rng(derive_seed(seed, s, 0x6e6f697365ULL));

    std::vector<std::string> codes;
    for (const auto& r : sem.reports)
      for (const auto& c : r.courses)
        if (std::find(codes.begin(), codes.end(), c.code) == codes.end()) codes.push_back(c.code);

    for (const auto& code : codes) {
      const bool late = rng.bernoulli(noise.late_posting_rate);
      const bool typo = rng.bernoulli(noise.typo_rate);
      if (late) {
        int first = 0;
        for (const auto& r : sem.reports) {
          for (const auto& c : r.courses)
            if (c.code == code && c.status.is_reported()) first = r.semester_week;
          if (first) break;
        }
        if (first)
          for (auto& r : sem.reports)
            if (r.semester_week >= first && r.semester_week < first + noise.late_posting_weeks)
              for (auto& c : r.courses)
                if (c.code == code && c.status.is_reported()) c.status = GradeStatus::not_yet_posted();
      }
      if (typo) {
        const std::string mutated = mutate_code(code, catalog);
        for (auto& r : sem.reports)
          for (auto& c : r.courses)
            if (c.code == code) c.code = mutated;
      }
    }
    for (auto& r : sem.reports) {
      if (r.missing) continue;
      if (rng.bernoulli(noise.skipped_journal_rate)) {
        r.journal_cs.clear();
        r.journal_noncs.clear();
        r.journal_personal.clear();
      }
    }
    StudentSemester rebuilt = build_student_semester(to_raw_reports(sem), sem.calendar, catalog);
    rebuilt.student_id = sem.student_id;
    for (auto& r : rebuilt.reports) r.student_id = sem.student_id;
    out.push_back(std::move(rebuilt));
  }
  return out;
}

}  // namespace csguide
