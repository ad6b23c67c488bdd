#pragma once

#include <compare>
#include <cstdint>

namespace ctxmatch {

using Millis = std::int64_t;

inline constexpr Millis kSecond = 1000;
inline constexpr Millis kMinute = 60 * kSecond;
inline constexpr Millis kHour = 60 * kMinute;
inline constexpr Millis kDay = 24 * kHour;

/// Milliseconds since the scenario epoch.
struct SimTime {
  Millis millis = 0;

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime operator+(Millis d) const { return SimTime{millis + d}; }
  constexpr SimTime operator-(Millis d) const { return SimTime{millis - d}; }
  constexpr Millis operator-(SimTime o) const { return millis - o.millis; }
};

}  // namespace ctxmatch
