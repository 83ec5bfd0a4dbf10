#include "ahmsa/data/emotion.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "ahmsa/errors.hpp"

namespace ahmsa::data {

namespace {

constexpr std::array<std::pair<std::string_view, int>, 14> kLabels = {{
    {"happy", kPositive},
    {"happiness", kPositive},
    {"positive", kPositive},
    {"sad", kNegative},
    {"sadness", kNegative},
    {"disgust", kNegative},
    {"contempt", kNegative},
    {"fear", kNegative},
    {"anger", kNegative},
    {"negative", kNegative},
    {"surprise", kSurprise},
    {"surprised", kSurprise},
    // Common spelling variants found in database annotation sheets.
    {"angry", kNegative},
    {"disgusted", kNegative},
}};

}  // namespace

int map_emotion(std::string_view raw_label) {
  std::string key;
  for (char ch : raw_label) {
    if (!std::isspace(static_cast<unsigned char>(ch))) {
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  const auto it = std::find_if(kLabels.begin(), kLabels.end(),
                               [&](const auto& entry) { return entry.first == key; });
  if (it == kLabels.end()) {
    throw ValidationError("unknown emotion label '" + std::string(raw_label) + "'");
  }
  return it->second;
}

std::string class_name(int class_id) {
  switch (class_id) {
    case kNegative: return "negative";
    case kPositive: return "positive";
    case kSurprise: return "surprise";
    default: throw ValidationError("class id " + std::to_string(class_id) + " out of range");
  }
}

}  // namespace ahmsa::data
