#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace smahyper {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(int year, unsigned month, unsigned day);

// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS]" (a space may replace 'T';
// a trailing 'Z' is accepted) into seconds since the Unix epoch, UTC.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

// Formats seconds since the epoch as "YYYY-MM-DDTHH:MM:SS".
std::string format_timestamp(std::int64_t epoch_seconds);
std::string format_date(std::int64_t epoch_seconds);

// 0 = Monday ... 6 = Sunday.
int weekday_monday0(std::int64_t epoch_seconds);

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

}  // namespace smahyper
