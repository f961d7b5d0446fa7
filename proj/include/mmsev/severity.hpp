#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace mmsev {

/// Ordered severity grades; the underlying value is the 0-based class index.
enum class Severity : std::size_t { kNormal = 0, kMild = 1, kModerate = 2, kSevere = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Severity, kNumClasses> kAllSeverities = {
    Severity::kNormal, Severity::kMild, Severity::kModerate, Severity::kSevere};

constexpr std::size_t class_index(Severity s) { return static_cast<std::size_t>(s); }
Severity severity_from_index(std::size_t idx);

std::string_view to_string(Severity s);
/// Accepts "Normal", "Mild", "Moderate", "Severe" (case-insensitive).
std::optional<Severity> parse_severity(std::string_view text);

/// AHI grading: [0,5) Normal, [5,15) Mild, [15,30) Moderate, ≥30 Severe.
/// Throws DomainError for negative or non-finite AHI.
Severity label_from_ahi(double ahi);

}  // namespace mmsev
