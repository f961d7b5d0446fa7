#include "mmsev/severity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "mmsev/errors.hpp"

namespace mmsev {

Severity severity_from_index(std::size_t idx) {
  if (idx >= kNumClasses) throw LabelError(fmt::format("class index {} outside 0..{}", idx, kNumClasses - 1));
  return static_cast<Severity>(idx);
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::kNormal: return "Normal";
    case Severity::kMild: return "Mild";
    case Severity::kModerate: return "Moderate";
    case Severity::kSevere: return "Severe";
  }
  return "Normal";
}

std::optional<Severity> parse_severity(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "normal") return Severity::kNormal;
  if (lower == "mild") return Severity::kMild;
  if (lower == "moderate") return Severity::kModerate;
  if (lower == "severe") return Severity::kSevere;
  return std::nullopt;
}

Severity label_from_ahi(double ahi) {
  if (!std::isfinite(ahi) || ahi < 0.0) throw DomainError(fmt::format("AHI must be >= 0, got {}", ahi));
  if (ahi < 5.0) return Severity::kNormal;
  if (ahi < 15.0) return Severity::kMild;
  if (ahi < 30.0) return Severity::kModerate;
  return Severity::kSevere;
}

}  // namespace mmsev
