#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace crowdlens {

using Duration = std::chrono::seconds;

/// A UTC instant with second resolution, serialized as `YYYY-MM-DDTHH:MM:SSZ`.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t epoch_seconds) : seconds_(epoch_seconds) {}

  /// Accepts `YYYY-MM-DDTHH:MM:SS` followed by `Z`, `+00:00` or nothing
  /// (interpreted as UTC). A space is accepted in place of `T`.
  /// Throws ParseError on anything else.
  static Timestamp parse(std::string_view text);

  static Timestamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0,
                              unsigned minute = 0, unsigned second = 0);

  constexpr std::int64_t epoch_seconds() const { return seconds_; }
  std::string iso() const;

  /// Seconds elapsed since 00:00:00 UTC of the same day.
  constexpr std::int64_t second_of_day() const {
    auto r = seconds_ % 86400;
    return r < 0 ? r + 86400 : r;
  }

  constexpr auto operator<=>(const Timestamp&) const = default;

  constexpr Timestamp operator+(Duration d) const { return Timestamp(seconds_ + d.count()); }
  constexpr Timestamp operator-(Duration d) const { return Timestamp(seconds_ - d.count()); }
  constexpr Duration operator-(Timestamp other) const { return Duration(seconds_ - other.seconds_); }

 private:
  std::int64_t seconds_ = 0;
};

}  // namespace crowdlens
