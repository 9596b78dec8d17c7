#include "csguide/ml/encoding.hpp"

#include "csguide/text.hpp"

namespace csguide::ml {

InterventionSet EncodedSample::label_set() const {
  InterventionSet out;
  for (std::size_t i = 0; i < kLabelCount; ++i)
    if (labels[i]) out.set_index(i);
  return out;
}

EncodedSample encode(int week, const AcademicCalendar& calendar, const QuantFeatures& quant, const QualFeatures& qual,
                     const InterventionSet* decision) {
  if (week < 1 || week > calendar.weeks) throw Error("encode: week " + std::to_string(week) + " outside calendar");
  EncodedSample s;
  s.features[0] = static_cast<double>(week) / static_cast<double>(calendar.final_week);
  for (std::size_t i = 0; i < kQuantCount; ++i) s.features[1 + i] = quant.test_index(i) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < kQualCount; ++i) s.features[1 + kQuantCount + i] = qual.test_index(i) ? 1.0 : 0.0;
  if (decision)
    for (std::size_t i = 0; i < kLabelCount; ++i) s.labels[i] = decision->test_index(i) ? 1 : 0;
  return s;
}

const std::vector<std::string>& feature_index_map() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v{"week"};
    for (auto c : FlagTraits<QuantFlag>::codes) v.emplace_back(c);
    for (auto c : FlagTraits<QualFlag>::codes) v.emplace_back(c);
    return v;
  }();
  return names;
}

std::string dataset_hash(const std::vector<EncodedSample>& data) {
  std::uint64_t h = text::fnv1a("");
  for (const auto& s : data) {
    for (double f : s.features) h = text::fnv1a(text::format_double(f) + ",", h);
    std::string labels(s.labels.begin(), s.labels.end());
    for (auto& c : labels) c = static_cast<char>('0' + c);
    h = text::fnv1a(labels + "\n", h);
  }
  return text::hex64(h);
}

}  // namespace csguide::ml
