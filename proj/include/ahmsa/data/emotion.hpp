#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ahmsa::data {

inline constexpr std::size_t kNumClasses = 3;
inline constexpr int kNegative = 0;
inline constexpr int kPositive = 1;
inline constexpr int kSurprise = 2;

/// Case-insensitive mapping of a raw database label onto the three classes:
/// happy -> positive; sad, disgust, contempt, fear, anger -> negative;
/// surprise/surprised -> surprise. The class names themselves are accepted too.
/// Throws ValidationError naming an unknown label.
int map_emotion(std::string_view raw_label);

/// "negative", "positive" or "surprise".
std::string class_name(int class_id);

}  // namespace ahmsa::data
