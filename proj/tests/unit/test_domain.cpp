#include <doctest.h>

#include "csguide/domain.hpp"

using namespace csguide;

TEST_CASE("grade order follows the letter scale") {
  CHECK(grade_below(LetterGrade::CPlus, LetterGrade::BMinus));
  CHECK_FALSE(grade_below(LetterGrade::BMinus, LetterGrade::BMinus));
  CHECK(grade_below(LetterGrade::F, LetterGrade::DMinus));
  for (std::size_t i = 1; i < kAllGrades.size(); ++i) CHECK(kAllGrades[i] < kAllGrades[i - 1]);
}

TEST_CASE("grade text round-trips") {
  for (LetterGrade g : kAllGrades) CHECK(parse_grade(to_string(g)) == g);
  CHECK_FALSE(parse_grade("E").has_value());
  CHECK_FALSE(parse_grade("").has_value());
}

TEST_CASE("grade status tokens round-trip") {
  const std::vector<GradeStatus> all = {GradeStatus::reported(LetterGrade::BPlus), GradeStatus::not_yet_posted(),
                                        GradeStatus::dropped(), GradeStatus::pass_fail(),
                                        GradeStatus::report_missing()};
  for (const auto& s : all) CHECK(decode_status(encode_status(s)) == s);
  CHECK_THROWS_AS(decode_status("maybe"), Error);
}

TEST_CASE("course categories parse") {
  for (auto c : {CourseCategory::CSTrackCore, CourseCategory::CSTrackSTEM, CourseCategory::OtherElectives})
    CHECK(parse_category(to_string(c)) == c);
  CHECK_THROWS_AS(parse_category("humanities"), Error);
}

TEST_CASE("flag codes are canonical and case-sensitive") {
  CHECK(code_of(QuantFlag::G1_2) == "G1.2");
  CHECK(code_of(QualFlag::P2_2) == "P2.2");
  CHECK(intervention_parse("C1.3") == Intervention::C1_3);
  CHECK_THROWS_AS(parse_code<QualFlag>("a1"), UnknownCode);
  CHECK_THROWS_AS(intervention_parse("C5"), UnknownCode);
  CHECK(InterventionSet::size == 23);
  CHECK(kTriggerCount == 27);
}

TEST_CASE("flag sets encode in canonical order") {
  InterventionSet s{Intervention::R1, Intervention::C1_1, Intervention::S2};
  CHECK(s.encode() == "C1.1,S2,R1");
  CHECK(InterventionSet::decode("S2, R1 ,C1.1") == s);
  CHECK(InterventionSet::decode("").none());
  CHECK_THROWS_AS(InterventionSet::decode("R1,R9"), UnknownCode);
  CHECK(s.count() == 3);
  CHECK((s - InterventionSet{Intervention::R1}).encode() == "C1.1,S2");
  CHECK(s.contains(InterventionSet{Intervention::S2}));
  CHECK_FALSE(s.contains(InterventionSet{Intervention::S3}));
}

TEST_CASE("triggers index quantitative flags before qualitative ones") {
  CHECK(Trigger::of(QuantFlag::G1_1).index == 0);
  CHECK(Trigger::of(QualFlag::A1).index == kQuantCount);
  CHECK(Trigger::parse("O").code() == "O");
  CHECK(Trigger::parse("M2.2").index == static_cast<std::size_t>(QuantFlag::M2_2));
  CHECK_THROWS_AS(Trigger::parse("M2"), UnknownCode);

  QuantFeatures q{QuantFlag::M1_1};
  QualFeatures h{QualFlag::H2, QualFlag::A1};
  const auto fired = fired_triggers(q, h);
  REQUIRE(fired.size() == 3);
  CHECK(fired[0].code() == "M1.1");
  CHECK(fired[1].code() == "A1");
  CHECK(fired[2].code() == "H2");
}
