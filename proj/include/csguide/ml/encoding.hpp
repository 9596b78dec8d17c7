#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "csguide/domain.hpp"

namespace csguide::ml {

/// Feature layout: [0] week / final_week, [1..13] quantitative flags,
/// [14..27] qualitative flags, each block in canonical order.
inline constexpr std::size_t kFeatureCount = 1 + kQuantCount + kQualCount;
inline constexpr std::size_t kLabelCount = kInterventionCount;

struct EncodedSample {
  std::array<double, kFeatureCount> features{};
  std::array<std::uint8_t, kLabelCount> labels{};

  InterventionSet label_set() const;
  friend bool operator==(const EncodedSample&, const EncodedSample&) = default;
};

/// `decision` may be null (inference); labels are then all zero.
EncodedSample encode(int week, const AcademicCalendar& calendar, const QuantFeatures& quant, const QualFeatures& qual,
                     const InterventionSet* decision = nullptr);

/// Names of the feature coordinates: "week" followed by flag codes.
const std::vector<std::string>& feature_index_map();

/// Order-sensitive digest of the samples (features and labels).
std::string dataset_hash(const std::vector<EncodedSample>& data);

class EmptyDataset : public Error {
public:
  EmptyDataset() : Error("training dataset is empty") {}
};

}  // namespace csguide::ml
